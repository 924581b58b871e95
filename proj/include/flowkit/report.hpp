#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowkit/errors.hpp"
#include "flowkit/grid.hpp"

#ifndef FLOWKIT_VERSION
#define FLOWKIT_VERSION "0.1.0"
#endif

namespace flowkit {

using Json = nlohmann::ordered_json;

inline constexpr int report_schema_version = 1;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "\"nan\"";
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void write_json(std::string& out, const Json& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner + Json(it.key()).dump() + ": ";
        write_json(out, it.value(), indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& v : j) flat = flat && !v.is_structured();
      out += flat ? "[" : "[\n";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += flat ? ", " : ",\n";
        first = false;
        if (!flat) out += inner;
        write_json(out, v, indent + 1);
      }
      out += flat ? "]" : "\n" + pad + "]";
      return;
    }
    case Json::value_t::number_float: out += format_double(j.get<double>()); return;
    default: out += j.dump();
  }
}

}  // namespace detail

/// Deterministic text: insertion-ordered keys, doubles at 17 significant
/// digits, non-finite values as the strings "inf", "-inf", "nan".
inline std::string to_json_text(const Json& j) {
  std::string out;
  detail::write_json(out, j, 0);
  out += "\n";
  return out;
}

struct Artifact {
  std::string path;  // relative to the report directory
  std::string kind;  // "csv-series", "csv-cloud", "json", "bit-matrix"
  bool complete = true;
};

/// One subcommand run: resolved config, results, artifacts on disk.
class Report {
 public:
  Report(std::string command, std::filesystem::path dir) : command_(std::move(command)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }
  Json& results() { return results_; }
  void set_config(Json c) { config_ = std::move(c); }
  void flag(const std::string& name, const std::string& note) { flags_.push_back({{"name", name}, {"note", note}}); }
  void set_status(std::string s) { status_ = std::move(s); }

  // CSV with a header row; values at 17 significant digits.
  void write_series(const std::string& name, const std::vector<std::string>& columns,
                    const std::vector<std::vector<double>>& rows) {
    const std::string rel = name + ".csv";
    std::ofstream os(dir_ / rel);
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << "\n";
    char buf[32];
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", r[i]);
        os << (i ? "," : "") << buf;
      }
      os << "\n";
    }
    artifacts_.push_back({rel, "csv-series", os.good()});
  }

  void write_cloud(const std::string& name, const PointCloud& cloud) {
    const std::string rel = name + ".csv";
    std::ofstream os(dir_ / rel);
    write_csv(os, cloud);
    artifacts_.push_back({rel, "csv-cloud", os.good()});
  }

  void add_artifact(Artifact a) { artifacts_.push_back(std::move(a)); }

  // The run stopped early; whatever is on disk is incomplete.
  void mark_partial() { partial_ = true; }

  Json to_json() const {
    Json j;
    j["schema_version"] = report_schema_version;
    j["tool"] = {{"name", "flowkit"}, {"version", FLOWKIT_VERSION}};
    j["command"] = command_;
    j["status"] = status_;
    j["config"] = config_;
    j["results"] = results_;
    j["flags"] = flags_;
    Json manifest = Json::array();
    bool partial = partial_;
    for (const auto& a : artifacts_) {
      manifest.push_back({{"path", a.path}, {"kind", a.kind}, {"complete", a.complete}});
      partial = partial || !a.complete;
    }
    j["artifacts"] = manifest;
    j["partial_artifacts"] = partial;
    return j;
  }

  std::filesystem::path write() const {
    const auto path = dir_ / "report.json";
    std::ofstream os(path);
    os << to_json_text(to_json());
    require(os.good(), ErrorCode::config_error, "cannot write " + path.string());
    return path;
  }

 private:
  std::string command_;
  std::filesystem::path dir_;
  Json config_ = Json::object();
  Json results_ = Json::object();
  Json flags_ = Json::array();
  std::vector<Artifact> artifacts_;
  std::string status_ = "ok";
  bool partial_ = false;
};

}  // namespace flowkit
