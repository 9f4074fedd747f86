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

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "partguide/dataset.hpp"
#include "partguide/label_store.hpp"
#include "partguide/patchgrid.hpp"
#include "partguide/prototypes.hpp"

namespace httplib {
class Server;
}

namespace partguide {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 = any free port
  std::filesystem::path store_path = "labels.jsonl";
};

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Annotation API over one dataset and one prototype set. Handlers are
/// plain methods so they can be exercised without a socket.
class AnnotationService {
 public:
  AnnotationService(Manifest manifest, GridConfig grid_config, std::vector<Prototype> prototypes,
                    std::filesystem::path store_path);

  HttpReply parts() const;
  HttpReply prototypes(const std::string& part_class) const;
  HttpReply patches(const std::string& prototype_id) const;
  HttpReply submit_label(const std::string& body);
  HttpReply progress(const std::string& part_class) const;
  HttpReply image(const std::string& image_id) const;

  const LabelStore& store() const { return store_; }

  /// Wires the handlers onto `server` under /api.
  void mount(httplib::Server& server);

 private:
  const Prototype* find_prototype(int id) const;
  std::string member_json(const PatchKey& key) const;

  Manifest manifest_;
  std::map<std::string, PatchGrid> grids_;
  std::vector<Prototype> prototypes_;
  std::map<int, std::size_t> by_id_;
  LabelStore store_;
};

/// Blocks serving `service` until the server stops. Throws when the port
/// cannot be bound.
/// Binds without SO_REUSEPORT so an occupied port is reported as busy.
void exclusive_port(httplib::Server& server);

void run_service(AnnotationService& service, const ServiceConfig& config);

}  // namespace partguide
