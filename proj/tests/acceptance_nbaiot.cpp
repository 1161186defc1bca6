// Full-scale check on the real N-BaIoT CSVs with the paper-scale profile.
// Skips (exit 77) unless $FEDIOT_DATA_ROOT holds all nine device directories.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "fediot/data.hpp"
#include "fediot/experiment.hpp"

using namespace fediot;
namespace fs = std::filesystem;

int main() {
  const char* root = std::getenv(app::kDataRootEnv);
  if (root == nullptr) {
    std::printf("SKIP  criterion 1  N-BaIoT reproduction: $%s not set\n", app::kDataRootEnv);
    return 77;
  }
  for (const auto& dev : data::kNbaiotDevices) {
    if (!fs::is_directory(fs::path(root) / dev)) {
      std::printf("SKIP  criterion 1  N-BaIoT reproduction: %s/%s missing\n", root, dev.c_str());
      return 77;
    }
  }

  const fs::path work = fs::temp_directory_path() / "fediot_nbaiot_acceptance";
  auto config = app::ExperimentConfig::for_profile(app::Profile::kPaper);
  config.dataset = app::DatasetKind::kNbaiot;
  config.data_root = root;
  config.cache_dir = work / "cache";
  config.output_dir = work / "runs";
  config.ae.seed = config.seed;
  std::ostringstream log;
  try {
    app::cmd_prepare_data(config, log);
    config.mode = app::Mode::kFl;
    const auto fl = app::cmd_train(config, std::cout);
    config.mode = app::Mode::kClCombined;
    const auto comb = app::cmd_train(config, std::cout);
    config.mode = app::Mode::kClSingle;
    const auto single = app::cmd_train(config, std::cout);

    const double fl_acc = fl.metrics.acc;
    const double fl_tpr = fl.metrics.tpr.value_or(0.0);
    const bool ok_fl = fl_acc >= 0.955 && fl_tpr >= 0.99;
    const bool ok_comb = comb.metrics.acc >= fl_acc;
    const bool ok_single = single.metrics.acc <= comb.metrics.acc - 0.15;
    const double minutes = (fl.wall_seconds + comb.wall_seconds + single.wall_seconds) / 60.0;
    std::printf("%s  criterion 1  N-BaIoT reproduction  FL acc=%.4f tpr=%.4f; CL-Combined acc=%.4f; "
                "CL-Single avg acc=%.4f; %.1f min\n",
                ok_fl && ok_comb && ok_single ? "PASS" : "FAIL", fl_acc, fl_tpr, comb.metrics.acc,
                single.metrics.acc, minutes);
    return ok_fl && ok_comb && ok_single ? 0 : 1;
  } catch (const std::exception& e) {
    std::printf("FAIL  criterion 1  N-BaIoT reproduction: %s\n", e.what());
    return 1;
  }
}
