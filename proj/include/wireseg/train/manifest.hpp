// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace wireseg {

// Append-only record of a training run: config snapshot, per-epoch losses
// and eval metrics, phase markers, checkpoint digests. Serialized verbatim,
// so two identically seeded runs must produce identical files.
class RunManifest {
 public:
  RunManifest() {
    j_["schema_version"] = 1;
    j_["epochs"] = nlohmann::json::array();
    j_["events"] = nlohmann::json::array();
    j_["checkpoints"] = nlohmann::json::object();
  }

  void set_config(const nlohmann::json& cfg) { j_["config"] = cfg; }
  void set(const std::string& key, const nlohmann::json& v) { j_[key] = v; }

  void add_epoch(const nlohmann::json& e) { j_["epochs"].push_back(e); }
  void add_event(const nlohmann::json& e) { j_["events"].push_back(e); }
  void add_checkpoint(const std::string& name, const std::string& digest) {
    j_["checkpoints"][name] = digest;
  }
  void set_abort(const nlohmann::json& diag) { j_["aborted"] = diag; }

  const nlohmann::json& json() const { return j_; }
  nlohmann::json& json() { return j_; }

  std::string dump() const { return j_.dump(2); }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write manifest: " + path);
    f << dump() << "\n";
  }

 private:
  nlohmann::json j_;
};

struct TrainingAbortError : std::runtime_error {
  explicit TrainingAbortError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wireseg
