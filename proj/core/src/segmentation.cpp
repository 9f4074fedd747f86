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

#include "partguide/segmentation.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "partguide/error.hpp"

namespace partguide {

using nlohmann::json;
using nlohmann::ordered_json;

// --- wire format -----------------------------------------------------------

std::string encode_request(const SegmentationRequest& r) {
  ordered_json j;
  j["id"] = r.id;
  j["image_id"] = r.image_id;
  j["roi"] = {r.roi.x0, r.roi.y0, r.roi.x1, r.roi.y1};
  if (r.point) {
    ordered_json p;
    p["point"] = {r.point->x, r.point->y};
    j["prompt"] = std::move(p);
  } else if (r.text) {
    ordered_json p;
    p["text"] = *r.text;
    j["prompt"] = std::move(p);
  } else {
    j["prompt"] = nullptr;
  }
  return j.dump();
}

SegmentationRequest decode_request(std::string_view line) {
  SegmentationRequest r;
  try {
    const auto j = json::parse(line);
    r.id = j.at("id").get<int>();
    r.image_id = j.at("image_id").get<std::string>();
    const auto& roi = j.at("roi");
    if (!roi.is_array() || roi.size() != 4) fail(ErrorCode::kProtocol, "roi must be [x0,y0,x1,y1]");
    r.roi = {roi[0].get<int>(), roi[1].get<int>(), roi[2].get<int>(), roi[3].get<int>()};
    const auto& prompt = j.at("prompt");
    if (prompt.is_object()) {
      if (prompt.contains("point")) {
        r.point = Point{prompt["point"].at(0).get<int>(), prompt["point"].at(1).get<int>()};
      } else if (prompt.contains("text")) {
        r.text = prompt["text"].get<std::string>();
      } else {
        fail(ErrorCode::kProtocol, "prompt must carry point or text");
      }
    } else if (!prompt.is_null()) {
      fail(ErrorCode::kProtocol, "prompt must be an object or null");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kProtocol, std::string("bad request: ") + e.what());
  }
  return r;
}

std::string encode_response(const SegmentationResponse& r) {
  ordered_json j;
  j["id"] = r.id;
  auto rle = ordered_json::array();
  for (const auto& run : r.rle) rle.push_back({run.start, run.length});
  j["rle"] = std::move(rle);
  j["width"] = r.width;
  j["height"] = r.height;
  j["score"] = r.score;
  return j.dump();
}

SegmentationResponse decode_response(std::string_view line) {
  SegmentationResponse r;
  try {
    const auto j = json::parse(line);
    if (j.contains("error")) {
      fail(ErrorCode::kProtocol, "backend error: " + j["error"].get<std::string>());
    }
    r.id = j.at("id").get<int>();
    for (const auto& run : j.at("rle")) {
      if (!run.is_array() || run.size() != 2) fail(ErrorCode::kProtocol, "rle entry must be [start,run]");
      r.rle.push_back({run[0].get<std::int64_t>(), run[1].get<std::int64_t>()});
    }
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.score = j.at("score").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kProtocol, std::string("bad response: ") + e.what());
  }
  return r;
}

// --- backends --------------------------------------------------------------

std::vector<BackendResult> SegmentationBackend::segment_batch(
    std::span<const SegmentationRequest> requests, std::size_t /*max_in_flight*/) {
  std::vector<BackendResult> out(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    try {
      out[i].response = segment(requests[i]);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  }
  return out;
}

OracleBackend::OracleBackend(std::map<std::string, BinaryGrid> ground_truth_by_image)
    : ground_truth_(std::move(ground_truth_by_image)) {}

SegmentationResponse OracleBackend::segment(const SegmentationRequest& request) {
  const auto it = ground_truth_.find(request.image_id);
  if (it == ground_truth_.end()) {
    fail(ErrorCode::kNotFound, "oracle has no ground truth for '" + request.image_id + "'");
  }
  const auto& gt = it->second;
  const Box& roi = request.roi;
  if (roi.empty() || roi.x0 < 0 || roi.y0 < 0 || roi.x1 > gt.width() || roi.y1 > gt.height()) {
    fail(ErrorCode::kProtocol, "roi outside image");
  }
  const auto local = gt.crop(roi);
  return {request.id, encode_rle(local), local.width(), local.height(), 1.0};
}

SegmentationResponse BoxFillBackend::segment(const SegmentationRequest& request) {
  if (request.roi.empty()) fail(ErrorCode::kProtocol, "empty roi");
  const std::int64_t area = request.roi.area();
  return {request.id, {{0, area}}, request.roi.width(), request.roi.height(), 1.0};
}

std::size_t serve_stream(SegmentationBackend& backend, std::istream& in, std::ostream& out) {
  std::size_t served = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int id = -1;
    try {
      const auto req = decode_request(line);
      id = req.id;
      out << encode_response(backend.segment(req)) << '\n';
    } catch (const std::exception& e) {
      ordered_json j;
      j["id"] = id;
      j["error"] = e.what();
      out << j.dump() << '\n';
    }
    out.flush();
    ++served;
  }
  return served;
}

// --- external process ------------------------------------------------------

ProcessBackend::ProcessBackend(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  start();
}

ProcessBackend::~ProcessBackend() { stop(); }

void ProcessBackend::start() {
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) {
    fail(ErrorCode::kIo, std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) fail(ErrorCode::kIo, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::signal(SIGPIPE, SIG_IGN);
}

void ProcessBackend::stop() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    // Give the child a moment to exit on EOF before forcing it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      ::usleep(10000);
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void ProcessBackend::write_line(const std::string& line) {
  if (broken_) fail(ErrorCode::kProtocol, "backend stream is broken");
  const std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      fail(ErrorCode::kIo, std::string("write to backend: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string ProcessBackend::read_line() {
  if (broken_) fail(ErrorCode::kProtocol, "backend stream is broken");
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      broken_ = true;
      fail(ErrorCode::kProtocol, "backend timeout");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) continue;
    char chunk[4096];
    const auto n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      broken_ = true;
      fail(ErrorCode::kProtocol, "backend closed its output");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

SegmentationResponse ProcessBackend::segment(const SegmentationRequest& request) {
  write_line(encode_request(request));
  for (;;) {
    auto resp = decode_response(read_line());
    if (resp.id == request.id) return resp;
  }
}

std::vector<BackendResult> ProcessBackend::segment_batch(
    std::span<const SegmentationRequest> requests, std::size_t max_in_flight) {
  max_in_flight = std::max<std::size_t>(1, max_in_flight);
  std::vector<BackendResult> out(requests.size());
  std::map<int, std::size_t> pending;  // id -> position
  std::size_t next = 0;
  const auto fail_pending = [&](const std::string& msg) {
    for (const auto& [id, pos] : pending) out[pos].error = msg;
    pending.clear();
  };
  while (next < requests.size() || !pending.empty()) {
    while (next < requests.size() && pending.size() < max_in_flight) {
      const auto& req = requests[next];
      if (pending.contains(req.id)) {
        out[next++].error = "duplicate request id " + std::to_string(req.id);
        continue;
      }
      try {
        write_line(encode_request(req));
        pending[req.id] = next;
      } catch (const std::exception& e) {
        out[next].error = e.what();
      }
      ++next;
    }
    if (pending.empty()) continue;
    std::string line;
    try {
      line = read_line();
    } catch (const std::exception& e) {
      fail_pending(e.what());
      continue;
    }
    int id = -1;
    try {
      id = json::parse(line).at("id").get<int>();
    } catch (const json::exception&) {
      fail_pending("unparsable backend line");
      broken_ = true;
      continue;
    }
    const auto it = pending.find(id);
    if (it == pending.end()) continue;  // stale or unsolicited
    try {
      out[it->second].response = decode_response(line);
    } catch (const std::exception& e) {
      out[it->second].error = e.what();
    }
    pending.erase(it);
  }
  return out;
}

// --- region segmentation ---------------------------------------------------

namespace {

/// Validates a response against its ROI and returns the roi-local grid.
BinaryGrid local_mask(const SegmentationResponse& resp, const Box& roi) {
  if (resp.width != roi.width() || resp.height != roi.height()) {
    fail(ErrorCode::kProtocol, "protocol violation: response mask is " + std::to_string(resp.width) +
                                   "x" + std::to_string(resp.height) + " but roi is " +
                                   std::to_string(roi.width()) + "x" + std::to_string(roi.height()));
  }
  try {
    return decode_rle(resp.rle, resp.width, resp.height);
  } catch (const Error& e) {
    fail(ErrorCode::kProtocol, std::string("protocol violation: ") + e.what());
  }
}

SegmentationRequest make_request(int id, const std::string& image_id, const PromptedRegion& r) {
  return {id, image_id, r.roi, r.point, r.text};
}

}  // namespace

ImagePrediction segment_regions(const std::string& image_id, int width, int height,
                                std::span<const PromptedRegion> regions, Variant variant,
                                SegmentationBackend& backend, std::size_t max_in_flight) {
  ImagePrediction pred{BinaryGrid(width, height), {}, {}};
  pred.scores.assign(regions.size(), std::numeric_limits<double>::quiet_NaN());
  if (variant == Variant::kPatchNaive) {
    for (std::size_t i = 0; i < regions.size(); ++i) {
      pred.mask.fill(regions[i].roi);
      pred.scores[i] = regions[i].peak_confidence;
    }
    return pred;
  }
  std::vector<SegmentationRequest> requests;
  requests.reserve(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    requests.push_back(make_request(static_cast<int>(i), image_id, regions[i]));
  }
  const auto results = backend.segment_batch(requests, max_in_flight);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& res = results[i];
    if (!res.response) {
      pred.failures.push_back({i, res.error.empty() ? "no response" : res.error});
      continue;
    }
    try {
      if (res.response->id != static_cast<int>(i)) fail(ErrorCode::kProtocol, "response id mismatch");
      const auto local = local_mask(*res.response, regions[i].roi);
      pred.mask.paste_or(local, regions[i].roi);
      pred.scores[i] = res.response->score;
    } catch (const Error& e) {
      pred.failures.push_back({i, e.what()});
    }
  }
  return pred;
}

SegmentMask segment(const std::string& image_id, int width, int height,
                    const PromptedRegion& region, Variant variant, SegmentationBackend& backend) {
  BinaryGrid grid(width, height);
  if (variant == Variant::kPatchNaive) {
    grid.fill(region.roi);
  } else {
    const auto resp = backend.segment(make_request(0, image_id, region));
    grid.paste_or(local_mask(resp, region.roi), region.roi);
  }
  return make_mask(image_id, "", grid);
}

}  // namespace partguide
