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

#include "partguide/http_backend.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "partguide/error.hpp"

namespace partguide {

struct HttpBackend::Impl {
  std::unique_ptr<httplib::Client> client;
  std::string path;
};

HttpBackend::HttpBackend(const std::string& url, std::chrono::milliseconds timeout) : impl_(std::make_unique<Impl>()) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::kInvalidArgument, "backend URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  const auto origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  impl_->path = path_start == std::string::npos ? "/segment" : url.substr(path_start);
  impl_->client = std::make_unique<httplib::Client>(origin);
  if (!impl_->client->is_valid()) fail(ErrorCode::kInvalidArgument, "unsupported backend URL: " + url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  impl_->client->set_connection_timeout(secs.count(), usecs.count());
  impl_->client->set_read_timeout(secs.count(), usecs.count());
  impl_->client->set_write_timeout(secs.count(), usecs.count());
}

HttpBackend::~HttpBackend() = default;

SegmentationResponse HttpBackend::segment(const SegmentationRequest& request) {
  const auto res = impl_->client->Post(impl_->path, encode_request(request), "application/json");
  if (!res) fail(ErrorCode::kIo, "segmentation service unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    fail(ErrorCode::kProtocol, "segmentation service answered HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return decode_response(res->body);
}

void mount_backend(SegmentationBackend& backend, httplib::Server& server) {
  server.Post("/segment", [&backend](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto response = backend.segment(decode_request(req.body));
      res.set_content(encode_response(response), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

std::unique_ptr<SegmentationBackend> make_backend(const std::string& spec,
                                                  std::map<std::string, BinaryGrid> ground_truth) {
  if (spec == "oracle") return std::make_unique<OracleBackend>(std::move(ground_truth));
  if (spec == "boxfill") return std::make_unique<BoxFillBackend>();
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<ProcessBackend>(spec.substr(4));
  if (spec.rfind("http://", 0) == 0) return std::make_unique<HttpBackend>(spec);
  fail(ErrorCode::kInvalidArgument, "unknown backend '" + spec + "' (oracle, boxfill, cmd:<command>, http://...)");
}

}  // namespace partguide
