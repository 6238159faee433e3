#include "stemfit/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

namespace {

using Command = std::function<void(const stemfit::KeyValueConfig&, std::ostream&)>;

struct Subcommand {
  const char* name;
  const char* help;
  Command run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse detector-filter estimation for 4D scanning diffraction data"};
  app.require_subcommand(1);

  const Subcommand commands[] = {
      {"synth", "generate a synthetic dataset, planted filter and training targets", stemfit::cmd_synth},
      {"fit", "fit a single lambda and write the filter", stemfit::cmd_fit},
      {"path", "fit a regularization path with train/test validation", stemfit::cmd_path},
      {"reconstruct", "apply a stored filter to a dataset", stemfit::cmd_reconstruct},
      {"validate", "score a stored filter against a target", stemfit::cmd_validate},
      {"linetrace", "normalized line trace through an image", stemfit::cmd_linetrace},
      {"fillcurve", "filling ratio versus lambda from path diagnostics", stemfit::cmd_fillcurve},
  };

  std::string config_path;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> flags;
  std::map<CLI::App*, Command> handlers;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", config_path, "key = value settings file");
    sub->add_option("-s,--set", overrides, "override a setting, key=value (repeatable)");
    sub->add_option("-o,--out", flags["out"], "output directory");
    sub->add_option("-t,--threads", flags["threads"], "worker threads");
    handlers[sub] = c.run;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    auto cfg = config_path.empty() ? stemfit::KeyValueConfig{} : stemfit::KeyValueConfig::load(config_path);
    for (const auto& [key, value] : flags)
      if (!value.empty()) cfg.set(key, value);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw stemfit::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.check_known(stemfit::known_config_keys());
    for (auto* sub : app.get_subcommands()) handlers.at(sub)(cfg, std::cout);
  } catch (const stemfit::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const stemfit::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const stemfit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
