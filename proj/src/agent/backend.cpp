#include "bodyrig/agent/backend.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "bodyrig/core/error.hpp"
#include "bodyrig/core/splitmix.hpp"

namespace bodyrig::agent {
namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

std::uint64_t mock_frame_seed(const CaptureRequest& req) {
  std::string key = req.session_id;
  key += '\0';
  key += req.node_id;
  key += '\0';
  key += to_string(req.phase);
  key += '\0';
  key += req.pattern_seed ? std::to_string(*req.pattern_seed) : std::string("-");
  return fnv1a64(key.data(), key.size());
}

Bytes mock_frame_bytes(const CaptureRequest& req, std::uint32_t width, std::uint32_t height) {
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t body = std::size_t{width} * height * 3;
  Bytes out;
  out.reserve(header.size() + body);
  out.insert(out.end(), header.begin(), header.end());
  SplitMix64 rng(mock_frame_seed(req));
  out.resize(header.size() + body);
  std::uint8_t* p = out.data() + header.size();
  for (std::size_t left = body; left > 0;) {
    std::uint64_t v = rng.next();
    const std::size_t n = std::min<std::size_t>(8, left);
    for (std::size_t i = 0; i < n; ++i, v >>= 8) p[i] = static_cast<std::uint8_t>(v);
    p += n;
    left -= n;
  }
  return out;
}

CapturedImage MockCaptureBackend::capture(const CaptureRequest& req) {
  if (fault_) throw Error(Errc::BackendFailure, "injected capture fault on " + req.node_id);
  ++captures_;
  return {width_, height_, mock_frame_bytes(req, width_, height_), duration_};
}

ExternalCaptureBackend::ExternalCaptureBackend(std::string command_template, std::string scratch_dir,
                                               std::uint32_t width, std::uint32_t height)
    : template_(std::move(command_template)), scratch_dir_(std::move(scratch_dir)), width_(width), height_(height) {}

CapturedImage ExternalCaptureBackend::capture(const CaptureRequest& req) {
  namespace fs = std::filesystem;
  const fs::path out = fs::path(scratch_dir_) / (req.node_id + "_" + std::string(to_string(req.phase)) + ".img");
  std::error_code ec;
  fs::remove(out, ec);
  std::string cmd = replace_all(template_, "{out}", out.string());
  cmd = replace_all(cmd, "{width}", std::to_string(width_));
  cmd = replace_all(cmd, "{height}", std::to_string(height_));
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  const auto elapsed = std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now() - t0);
  if (rc != 0) throw Error(Errc::BackendFailure, "capture command exited with " + std::to_string(rc));
  std::ifstream in(out, std::ios::binary);
  if (!in) throw Error(Errc::BackendFailure, "capture command produced no image");
  Bytes bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.empty()) throw Error(Errc::BackendFailure, "capture command produced an empty image");
  return {width_, height_, std::move(bytes), elapsed};
}

CommandResult MockCommandBackend::run(const std::string& command) {
  history_.push_back(command);
  CommandResult r{0, command, default_duration_};
  if (command.rfind("sleep ", 0) == 0) {
    r.duration = Micros{static_cast<std::int64_t>(std::atof(command.c_str() + 6) * 1e6)};
    r.output.clear();
  } else if (command == "fail") {
    r.exit_status = 1;
    r.output = "fail";
  } else if (command.rfind("echo ", 0) == 0) {
    r.output = command.substr(5);
  }
  return r;
}

CommandResult ShellCommandBackend::run(const std::string& command) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string wrapped = command + " 2>&1";
  FILE* pipe = ::popen(wrapped.c_str(), "r");
  if (pipe == nullptr) return {127, "popen failed", Micros{0}};
  std::string output;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  const auto elapsed = std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now() - t0);
  const int exit_status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  while (!output.empty() && output.back() == '\n') output.pop_back();
  return {exit_status, std::move(output), elapsed};
}

}  // namespace bodyrig::agent
