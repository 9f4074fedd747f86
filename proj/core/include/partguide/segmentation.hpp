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
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "partguide/guidance.hpp"
#include "partguide/mask.hpp"

namespace partguide {

/// Wire request:
///   {"id":int,"image_id":str,"roi":[x0,y0,x1,y1],"prompt":{"point":[x,y]}|{"text":str}|null}
struct SegmentationRequest {
  int id = 0;
  std::string image_id;
  Box roi;
  std::optional<Point> point;
  std::optional<std::string> text;
};

/// Wire response, mask in roi-local coordinates:
///   {"id":int,"rle":[[start,run],...],"width":int,"height":int,"score":float}
struct SegmentationResponse {
  int id = 0;
  std::vector<Run> rle;
  int width = 0;
  int height = 0;
  double score = 0.0;
};

std::string encode_request(const SegmentationRequest& request);
SegmentationRequest decode_request(std::string_view line);
std::string encode_response(const SegmentationResponse& response);
SegmentationResponse decode_response(std::string_view line);

/// Outcome of one request: a response or an error message.
struct BackendResult {
  std::optional<SegmentationResponse> response;
  std::string error;
};

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual std::string name() const = 0;

  /// Throws Error on failure.
  virtual SegmentationResponse segment(const SegmentationRequest& request) = 0;

  /// Results in request order. The default issues requests one at a time;
  /// failures are captured per request and never abort the batch.
  virtual std::vector<BackendResult> segment_batch(std::span<const SegmentationRequest> requests,
                                                   std::size_t max_in_flight);
};

/// Returns ground truth clipped to the ROI: an upper bound on what any
/// segmenter can achieve given the guidance.
class OracleBackend final : public SegmentationBackend {
 public:
  explicit OracleBackend(std::map<std::string, BinaryGrid> ground_truth_by_image);
  std::string name() const override { return "oracle"; }
  SegmentationResponse segment(const SegmentationRequest& request) override;

 private:
  std::map<std::string, BinaryGrid> ground_truth_;
};

/// Returns the full ROI as the mask.
class BoxFillBackend final : public SegmentationBackend {
 public:
  std::string name() const override { return "boxfill"; }
  SegmentationResponse segment(const SegmentationRequest& request) override;
};

/// Speaks the JSON-lines protocol with a child process over stdin/stdout.
/// Up to max_in_flight requests are written before reading; responses may
/// arrive in any order and are matched by id.
class ProcessBackend final : public SegmentationBackend {
 public:
  explicit ProcessBackend(std::string command,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ProcessBackend() override;
  ProcessBackend(const ProcessBackend&) = delete;
  ProcessBackend& operator=(const ProcessBackend&) = delete;

  std::string name() const override { return "external"; }
  SegmentationResponse segment(const SegmentationRequest& request) override;
  std::vector<BackendResult> segment_batch(std::span<const SegmentationRequest> requests,
                                           std::size_t max_in_flight) override;

 private:
  void start();
  void stop();
  void write_line(const std::string& line);
  std::string read_line();

  std::string command_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  bool broken_ = false;
};

/// Answers requests read line-by-line from `in` using `backend`, writing
/// responses to `out` (the server side of the stream protocol). Malformed
/// lines get {"id":-1,...,"error":msg}. Returns the number of requests served.
std::size_t serve_stream(SegmentationBackend& backend, std::istream& in, std::ostream& out);

struct RegionFailure {
  std::size_t region = 0;
  std::string message;
};

struct ImagePrediction {
  /// Union of all region masks, image coordinates.
  BinaryGrid mask;
  std::vector<RegionFailure> failures;
  /// Backend score per region (NaN where the region failed).
  std::vector<double> scores;
};

/// Segments every region of one image and unions the results. PatchNaive
/// fills region boxes without calling the backend. A response whose size
/// differs from its ROI is a protocol violation, recorded per region.
ImagePrediction segment_regions(const std::string& image_id, int width, int height,
                                std::span<const PromptedRegion> regions, Variant variant,
                                SegmentationBackend& backend, std::size_t max_in_flight = 4);

/// One region to an image-coordinate mask. Throws Error(kProtocol) when the
/// backend answer does not fit the ROI.
SegmentMask segment(const std::string& image_id, int width, int height,
                    const PromptedRegion& region, Variant variant, SegmentationBackend& backend);

}  // namespace partguide
