#include "bodyrig/coordinator/capture_store.hpp"

#include <fstream>

#include "bodyrig/core/digest.hpp"
#include "bodyrig/core/error.hpp"
#include "bodyrig/lighting/lighting.hpp"

namespace bodyrig::coordinator {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<Bytes> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) return std::nullopt;
  Bytes out(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!in) return std::nullopt;
  return out;
}

}  // namespace

nlohmann::json manifest_json(const SessionMeta& meta, const std::vector<ManifestRow>& rows) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& r : rows) {
    frames.push_back({{"node_id", r.node_id},
                      {"phase", to_string(r.phase)},
                      {"path", r.path},
                      {"bytes", r.bytes},
                      {"sha256", r.sha256},
                      {"captured_at", r.captured_at.count()}});
  }
  return {{"session_id", meta.session_id},
          {"started_at", meta.started_at.count()},
          {"light_level", lighting::percent(meta.light)},
          {"pattern",
           {{"kind", lighting::to_string(meta.pattern.kind)},
            {"seed", meta.pattern.seed},
            {"density", meta.pattern.density},
            {"width", meta.pattern.width},
            {"height", meta.pattern.height}}},
          {"frames", std::move(frames)}};
}

CaptureStore::CaptureStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "sessions"); }

fs::path CaptureStore::session_dir(const std::string& session_id) const { return root_ / "sessions" / session_id; }

void CaptureStore::open_session(const SessionMeta& meta) {
  const fs::path dir = session_dir(meta.session_id);
  fs::create_directories(dir / "texture");
  fs::create_directories(dir / "pattern");
  const Bytes pgm = lighting::encode_pgm(lighting::generate_pattern(meta.pattern));
  write_file(dir / "pattern.pgm", pgm);
  sessions_[meta.session_id] = Open{meta, {}};
}

const CaptureStore::Open& CaptureStore::open(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::NotFound, "no capture set for " + session_id);
  return it->second;
}

CaptureStore::Outcome CaptureStore::store_frame(const protocol::FrameHeader& h, std::span<const std::uint8_t> bytes) {
  auto& o = const_cast<Open&>(open(h.session_id));
  const FrameKey key{h.phase, h.node_id};
  if (o.rows.contains(key)) return Outcome::Duplicate;
  if (bytes.size() != h.byte_size) {
    throw Error(Errc::InvalidFrame, "expected " + std::to_string(h.byte_size) + " bytes, got " +
                                        std::to_string(bytes.size()));
  }
  const std::string sum = sha256_hex(bytes);
  if (sum != h.sha256) throw Error(Errc::ChecksumMismatch, h.node_id + "/" + std::string(to_string(h.phase)));
  const std::string rel = std::string(to_string(h.phase)) + "/" + h.node_id + ".ppm";
  write_file(session_dir(h.session_id) / rel, bytes);
  o.rows[key] = ManifestRow{h.node_id, h.phase, rel, h.byte_size, sum, Micros{h.captured_at_us}};
  return Outcome::Stored;
}

std::vector<ManifestRow> CaptureStore::rows(const std::string& session_id) const {
  std::vector<ManifestRow> out;
  for (const auto& [k, r] : open(session_id).rows) out.push_back(r);
  return out;
}

std::uint64_t CaptureStore::total_bytes(const std::string& session_id) const {
  std::uint64_t n = 0;
  for (const auto& [k, r] : open(session_id).rows) n += r.bytes;
  return n;
}

fs::path CaptureStore::finalize(const std::string& session_id) {
  const Open& o = open(session_id);
  const fs::path path = session_dir(session_id) / "manifest.json";
  const std::string text = manifest_json(o.meta, rows(session_id)).dump(2) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return path;
}

ManifestCheck verify_manifest(const fs::path& session_dir) {
  ManifestCheck check;
  const auto text = read_file(session_dir / "manifest.json");
  if (!text) {
    check.failures.push_back("manifest.json missing");
    return check;
  }
  nlohmann::json m = nlohmann::json::parse(text->begin(), text->end(), nullptr, false);
  if (m.is_discarded() || !m.contains("frames") || !m["frames"].is_array()) {
    check.failures.push_back("manifest.json unreadable");
    return check;
  }
  for (const auto& row : m["frames"]) {
    ++check.rows;
    const std::string path = row.value("path", "");
    const auto bytes = read_file(session_dir / path);
    if (!bytes) {
      check.failures.push_back(path + ": missing");
    } else if (bytes->size() != row.value("bytes", std::uint64_t{0})) {
      check.failures.push_back(path + ": size differs");
    } else if (sha256_hex(*bytes) != row.value("sha256", "")) {
      check.failures.push_back(path + ": checksum differs");
    } else {
      ++check.verified;
    }
  }
  return check;
}

CollectResult collect_frame(const CaptureSession& s, CaptureStore& store, const protocol::FrameHeader& header,
                            std::span<const std::uint8_t> bytes) {
  if (header.session_id != s.session_id) throw Error(Errc::NotFound, "frame for " + header.session_id);
  if (is_terminal(s.state)) throw Error(Errc::SessionClosed, s.session_id + " is " + std::string(to_string(s.state)));
  if (!s.expected.contains(header.node_id)) throw Error(Errc::UnknownNode, header.node_id);
  const SessionState first =
      header.phase == Phase::Texture ? SessionState::TextureCapture : SessionState::PatternCapture;
  if (s.state < first) {
    throw Error(Errc::PhaseMismatch, std::string(to_string(header.phase)) + " frame during " +
                                         std::string(to_string(s.state)));
  }
  const auto outcome = store.store_frame(header, bytes);
  return {outcome, session_step(s, ev::FrameReceived{header.node_id, header.phase})};
}

}  // namespace bodyrig::coordinator
