// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Usage: flowkit_acceptance [output-dir] [criterion ...]

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flowkit/cli.hpp"

int main(int argc, char** argv) {
  using namespace flowkit;
  namespace fs = std::filesystem;
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  std::vector<std::string> only(argv + std::min(argc, 2), argv + argc);

  fs::create_directories(out);
  std::ofstream summary(out / "summary.txt");
  int failed = 0, ran = 0;
  for (const auto& c : cli::all_criteria()) {
    bool wanted = only.empty();
    for (const auto& o : only) wanted = wanted || o == std::to_string(c.id) || o == c.key;
    if (!wanted) continue;
    ++ran;
    experiments::detail::Stopwatch sw;
    Json details = Json::object();
    bool pass = false;
    std::string note;
    try {
      Report r("acceptance", out / c.key);
      pass = c.run(details, &r);
      r.results() = details;
      r.results()["pass"] = pass;
      r.set_status(pass ? "pass" : "fail");
      r.write();
    } catch (const std::exception& e) {
      note = e.what();
    }
    char line[512];
    std::snprintf(line, sizeof line, "[%s] %2d %-26s %7.1fs  %s%s%s\n", pass ? "PASS" : "FAIL", c.id, c.key.c_str(),
                  sw.seconds(), c.title.c_str(), note.empty() ? "" : "  error: ", note.c_str());
    std::fputs(line, stdout);
    summary << line << std::flush;
    if (!pass) std::printf("%s", to_json_text(details).c_str());
    std::fflush(stdout);
    failed += pass ? 0 : 1;
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
