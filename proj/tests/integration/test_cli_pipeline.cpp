#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* kConfig =
    "[pipeline]\n"
    "target_rate_hz = 64\n"
    "band_hi_hz = 30\n"
    "notch_hz =\n"
    "epoch_seconds = 2\n"
    "[train]\n"
    "min_epochs = 1\n"
    "max_epochs = 3\n"
    "batch_size = 16\n"
    "grid_n_mi = 2\n"
    "grid_n_grl = 2\n"
    "grid_epochs = 2\n"
    "[synth]\n"
    "subjects = 3\n"
    "duration_s = 30\n"
    "seed = 5\n";

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("saf_it_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int saf(const std::string& args) {
  const std::string cmd = std::string("\"") + SAF_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Relative path -> bytes for every regular file below dir.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

// Runs the whole tool chain into root and returns its exit codes joined.
std::string run_chain(const fs::path& root) {
  std::ofstream(root / "run.ini") << kConfig;
  const std::string cfg = "--config " + (root / "run.ini").string();
  const std::string manifest = " --manifest " + (root / "data" / "manifest.csv").string();
  std::ostringstream codes;
  codes << saf("synth " + cfg + " --out " + (root / "data").string() + " --raw");
  codes << saf("preprocess " + cfg + " --in " + (root / "data" / "raw" / "S02_c1.safr").string() +
               " --subject S02 --class 1 --asr-calib " + (root / "data" / "raw" / "S02_c0.safr").string() +
               " --out " + (root / "pre").string());
  codes << saf("train " + cfg + manifest + " --lambda-mi 1 --lambda-grl 1 --out " + (root / "saf.safm").string() +
               " --log " + (root / "saf_log.csv").string());
  codes << saf("train " + cfg + manifest + " --baseline --out " + (root / "base.safm").string() + " --log " +
               (root / "base_log.csv").string());
  codes << saf("grid " + cfg + manifest + " --jobs 2 --out " + (root / "grid.csv").string());
  codes << saf("eval --model " + (root / "saf.safm").string() + manifest + " --out " + (root / "eval.csv").string());
  codes << saf("analyze" + manifest + " --out " + (root / "analysis").string());
  return codes.str();
}

}  // namespace

TEST_CASE("every command succeeds and repeats byte for byte") {
  const auto a = scratch("a"), b = scratch("b");
  CHECK(run_chain(a) == "0000000");
  CHECK(run_chain(b) == "0000000");
  const auto sa = snapshot(a), sb = snapshot(b);
  REQUIRE(sa.size() == sb.size());
  for (const auto& name : {"saf.safm", "saf_log.csv", "grid.csv", "eval.csv", "analysis/fstat.txt",
                           "pre/manifest.csv", "data/manifest.csv"})
    CHECK(sa.count(name) == 1);
  for (const auto& [name, bytes] : sa) {
    INFO(name);
    REQUIRE(sb.count(name) == 1);
    CHECK(bytes == sb.at(name));
  }
  CHECK(slurp(a / "grid.csv").rfind("lambda_mi,lambda_grl,val_macro_acc\n", 0) == 0);
}

TEST_CASE("exit codes") {
  const auto d = scratch("codes");
  std::ofstream(d / "bad.ini") << "[train]\nlr = fast\n";
  std::ofstream(d / "ok.ini") << kConfig;
  CHECK(saf("") == 1);
  CHECK(saf("nonsense") == 1);
  CHECK(saf("--help") == 0);
  CHECK(saf("synth --config " + (d / "bad.ini").string() + " --out " + (d / "x").string()) == 1);
  CHECK(saf("synth --config " + (d / "nope.ini").string() + " --out " + (d / "x").string()) == 2);
  CHECK(saf("analyze --manifest " + (d / "nope.csv").string() + " --out " + (d / "x").string()) == 2);
  std::ofstream(d / "broken.csv") << "not,a,manifest\n";
  CHECK(saf("analyze --manifest " + (d / "broken.csv").string() + " --out " + (d / "x").string()) == 2);
  CHECK(saf("train --config " + (d / "ok.ini").string() + " --manifest " + (d / "nope.csv").string() +
            " --out m --log l") == 1);
}
