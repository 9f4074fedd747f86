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

#include <chrono>
#include <memory>
#include <string>

#include "partguide/segmentation.hpp"

namespace httplib {
class Server;
}

namespace partguide {

/// Sends each request as a JSON body to `POST <url>` and reads one response
/// object back; the wire encoding is the same as the stdio protocol.
class HttpBackend final : public SegmentationBackend {
 public:
  explicit HttpBackend(const std::string& url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~HttpBackend() override;
  std::string name() const override { return "http"; }
  SegmentationResponse segment(const SegmentationRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves `backend` at POST /segment.
void mount_backend(SegmentationBackend& backend, httplib::Server& server);

/// Builds a backend from a backend string:
///   oracle            ground truth of `part_class` clipped to the ROI
///   boxfill           fills the ROI
///   cmd:<command>     JSON lines over the stdin/stdout of a child process
///   http://host:port/path
/// `ground_truth` is only used by the oracle.
std::unique_ptr<SegmentationBackend> make_backend(const std::string& spec,
                                                  std::map<std::string, BinaryGrid> ground_truth);

}  // namespace partguide
