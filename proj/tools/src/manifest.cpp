#include <cstdlib>
#include <fstream>
#include <regex>

#include "dino/errors.hpp"
#include "dino_cli/cli.hpp"

namespace fs = std::filesystem;

namespace dino::cli {

nlohmann::json RunManifest::to_json() const {
  return {{"run_id", run_id},     {"config", config},     {"code_hash", code_hash},
          {"seed", seed},         {"started", started},   {"finished", finished},
          {"status", status},     {"artifacts", artifacts}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.config = j.at("config").get<std::string>();
  m.code_hash = j.value("code_hash", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.status = j.value("status", "");
  m.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
  return m;
}

std::string code_hash() {
#ifdef DINO_CODE_HASH
  return DINO_CODE_HASH;
#else
  return "unknown";
#endif
}

void write_manifest(const RunManifest& m, const fs::path& file) {
  const auto tmp = fs::path(file).concat(".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError(tmp.string(), "cannot open for writing");
    out << m.to_json().dump(2) << '\n';
    if (!out) throw IoError(tmp.string(), "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError(file.string(), ec.message());
}

RunManifest read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError(file.string(), "cannot open for reading");
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(file.string(), std::string("malformed manifest: ") + e.what());
  }
}

fs::path default_runs_root() {
  if (const char* env = std::getenv("DINO_RUNS_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  static const std::regex step_dir(R"(step_(\d+))");
  std::int64_t best = -1;
  fs::path found;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(run_dir, ec)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (!std::regex_match(name, m, step_dir)) continue;
    const auto step = std::stoll(m[1]);
    if (step > best && fs::exists(e.path() / "checkpoint.pt")) {
      best = step;
      found = e.path() / "checkpoint.pt";
    }
  }
  if (ec) throw IoError(run_dir.string(), ec.message());
  if (best < 0) throw IoError(run_dir.string(), "no step_*/checkpoint.pt found");
  return found;
}

}  // namespace dino::cli
