// Copyright 2026 The partguide Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "partguide/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "partguide/error.hpp"

namespace partguide {

using ordered_json = nlohmann::ordered_json;

namespace {

HttpReply json_reply(const ordered_json& j, int status = 200) { return {status, j.dump(), "application/json"}; }

HttpReply error_reply(int status, const std::string& message) {
  ordered_json j;
  j["error"] = message;
  return json_reply(j, status);
}

ordered_json box_json(const Box& b) { return ordered_json::array({b.x0, b.y0, b.x1, b.y1}); }

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".pgm") return "image/x-portable-graymap";
  if (ext == ".ppm") return "image/x-portable-pixmap";
  return "application/octet-stream";
}

}  // namespace

AnnotationService::AnnotationService(Manifest manifest, GridConfig grid_config, std::vector<Prototype> prototypes,
                                     std::filesystem::path store_path)
    : manifest_(std::move(manifest)), prototypes_(std::move(prototypes)), store_(std::move(store_path)) {
  for (const auto& img : manifest_.images) {
    grids_.emplace(img.id, build_grid(img.id, img.width, img.height, grid_config));
  }
  for (std::size_t i = 0; i < prototypes_.size(); ++i) {
    if (!by_id_.emplace(prototypes_[i].id, i).second) {
      fail(ErrorCode::kFormat, "duplicate prototype id " + std::to_string(prototypes_[i].id));
    }
    for (const auto& m : prototypes_[i].members) {
      const auto it = grids_.find(m.image_id);
      if (it == grids_.end() || m.patch_index < 0 || static_cast<std::size_t>(m.patch_index) >= it->second.size()) {
        fail(ErrorCode::kNotFound, "prototype " + std::to_string(prototypes_[i].id) + " member (" + m.image_id +
                                       ", " + std::to_string(m.patch_index) + ") is not in the dataset grid");
      }
    }
  }
}

const Prototype* AnnotationService::find_prototype(int id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &prototypes_[it->second];
}

HttpReply AnnotationService::parts() const {
  ordered_json j;
  j["dataset_id"] = manifest_.dataset_id;
  j["parts"] = manifest_.part_classes;
  return json_reply(j);
}

HttpReply AnnotationService::prototypes(const std::string& part_class) const {
  if (!manifest_.has_class(part_class)) return error_reply(404, "unknown part '" + part_class + "'");
  std::vector<std::size_t> order;
  try {
    order = rank_prototypes(prototypes_, part_class);
  } catch (const Error& e) {
    return error_reply(409, e.what());
  }
  auto list = ordered_json::array();
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& p = prototypes_[order[rank]];
    ordered_json jp;
    jp["id"] = p.id;
    jp["rank"] = rank;
    jp["score"] = p.score_per_class.at(part_class);
    auto members = ordered_json::array();
    for (const auto& m : p.members) members.push_back(ordered_json::parse(member_json(m)));
    jp["members"] = std::move(members);
    const auto rec = store_.find(p.id, part_class);
    jp["label"] = rec ? ordered_json::parse(record_to_json(*rec)) : ordered_json(nullptr);
    list.push_back(std::move(jp));
  }
  ordered_json j;
  j["part"] = part_class;
  j["prototypes"] = std::move(list);
  return json_reply(j);
}

std::string AnnotationService::member_json(const PatchKey& key) const {
  const auto& patch = grids_.at(key.image_id).patches.at(static_cast<std::size_t>(key.patch_index));
  ordered_json jm;
  jm["image_id"] = key.image_id;
  jm["patch_index"] = key.patch_index;
  jm["box"] = box_json(patch.box);
  jm["thumbnail"] = "/api/image/" + key.image_id;
  return jm.dump();
}

HttpReply AnnotationService::patches(const std::string& prototype_id) const {
  int id = 0;
  try {
    std::size_t used = 0;
    id = std::stoi(prototype_id, &used);
    if (used != prototype_id.size()) throw std::invalid_argument(prototype_id);
  } catch (const std::exception&) {
    return error_reply(400, "prototype must be an integer id");
  }
  const auto* p = find_prototype(id);
  if (!p) return error_reply(404, "unknown prototype " + prototype_id);
  ordered_json j;
  j["prototype"] = id;
  auto members = ordered_json::array();
  for (const auto& m : p->members) members.push_back(ordered_json::parse(member_json(m)));
  j["patches"] = std::move(members);
  return json_reply(j);
}

HttpReply AnnotationService::submit_label(const std::string& body) {
  AnnotationRecord record;
  try {
    const auto j = nlohmann::json::parse(body);
    record.prototype_id = j.at("prototype_id").get<int>();
    record.part_class = j.at("part_class").get<std::string>();
    const auto& bulk = j.at("bulk_label");
    record.bulk_label = bulk.is_boolean() ? bulk.get<bool>() : bulk.get<int>() != 0;
    record.exceptions = j.value("exceptions", std::vector<int>{});
    record.annotator = j.value("annotator", std::string());
    record.timestamp = j.value("timestamp", std::string());
    record.source = LabelSource::kHuman;
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, std::string("malformed label submission: ") + e.what());
  }
  if (!manifest_.has_class(record.part_class)) return error_reply(404, "unknown part '" + record.part_class + "'");
  const auto* p = find_prototype(record.prototype_id);
  if (!p) return error_reply(404, "unknown prototype " + std::to_string(record.prototype_id));
  try {
    record = normalize_record(*p, std::move(record));
    store_.append(record);
  } catch (const Error& e) {
    return error_reply(e.code() == ErrorCode::kIo ? 500 : 400, e.what());
  }
  return {201, record_to_json(record), "application/json"};
}

HttpReply AnnotationService::progress(const std::string& part_class) const {
  if (!manifest_.has_class(part_class)) return error_reply(404, "unknown part '" + part_class + "'");
  const auto records = store_.records(part_class);
  std::vector<int> done;
  for (const auto& r : records) {
    if (by_id_.contains(r.prototype_id)) done.push_back(r.prototype_id);
  }
  // Cursor: first prototype in rank order that has no label yet.
  std::size_t cursor = prototypes_.size();
  try {
    const auto order = rank_prototypes(prototypes_, part_class);
    cursor = order.size();
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (!std::binary_search(done.begin(), done.end(), prototypes_[order[i]].id)) {
        cursor = i;
        break;
      }
    }
  } catch (const Error&) {
  }
  int clicks = 0;
  for (const auto& r : records) clicks += r.clicks;
  ordered_json j;
  j["part"] = part_class;
  j["done"] = done.size();
  j["total"] = prototypes_.size();
  j["cursor"] = cursor;
  j["completed"] = done;
  j["clicks"] = clicks;
  return json_reply(j);
}

HttpReply AnnotationService::image(const std::string& image_id) const {
  const ImageEntry* entry = nullptr;
  for (const auto& img : manifest_.images) {
    if (img.id == image_id) entry = &img;
  }
  if (!entry) return error_reply(404, "unknown image '" + image_id + "'");
  std::filesystem::path path = entry->pixel_source;
  if (path.is_relative()) path = manifest_.root / path;
  std::ifstream in(path, std::ios::binary);
  if (!in) return error_reply(404, "pixels for '" + image_id + "' not found");
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return {200, bytes.str(), content_type_for(path)};
}

void AnnotationService::mount(httplib::Server& server) {
  const auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  server.Get("/api/parts", [this, send](const httplib::Request&, httplib::Response& res) { send(res, parts()); });
  server.Get("/api/prototypes", [this, send](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("part")) return send(res, error_reply(400, "missing ?part="));
    send(res, prototypes(req.get_param_value("part")));
  });
  server.Get("/api/patches", [this, send](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("prototype")) return send(res, error_reply(400, "missing ?prototype="));
    send(res, patches(req.get_param_value("prototype")));
  });
  server.Post("/api/labels",
              [this, send](const httplib::Request& req, httplib::Response& res) { send(res, submit_label(req.body)); });
  server.Get("/api/progress", [this, send](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("part")) return send(res, error_reply(400, "missing ?part="));
    send(res, progress(req.get_param_value("part")));
  });
  server.Get(R"(/api/image/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, image(req.matches[1]));
  });
}

void exclusive_port(httplib::Server& server) {
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
}

void run_service(AnnotationService& service, const ServiceConfig& config) {
  httplib::Server server;
  exclusive_port(server);
  service.mount(server);
  if (!server.bind_to_port(config.host, config.port)) {
    fail(ErrorCode::kIo, "cannot bind " + config.host + ":" + std::to_string(config.port) + " (port busy?)");
  }
  server.listen_after_bind();
}

}  // namespace partguide
