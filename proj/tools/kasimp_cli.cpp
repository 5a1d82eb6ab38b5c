// Command-line front end over the C API.

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kasimp/kasimp.h"

namespace {

struct Owned {
  char* text = nullptr;
  ~Owned() { kas_string_free(text); }
  std::string str() const { return text ? text : ""; }
};

int report(kas_status status) {
  if (status != KAS_OK) {
    std::fprintf(stderr, "kasimp: %s: %s\n", kas_status_name(status), kas_last_error());
  }
  return static_cast<int>(status);
}

std::vector<std::string> config_keys() {
  Owned keys;
  if (kas_config_keys(&keys.text) != KAS_OK) return {};
  std::vector<std::string> out;
  std::istringstream in(keys.str());
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kasimp: rule-augmented neural sentence simplification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  bool verbose = false;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_file, "key=value configuration file");
  app.add_option("--set", overrides, "Extra key=value overrides")->take_all();
  app.add_flag("-v,--verbose", verbose, "Print progress messages");
  app.set_version_flag("--version", std::string(kas_version()) + " (" + kas_build_id() + ")");

  // Every configuration key doubles as a flag; flags win over the file.
  const auto keys = config_keys();
  std::map<std::string, std::string> flag_values;
  for (const auto& key : keys) {
    app.add_option(flag_name(key), flag_values[key])->group("Configuration");
  }

  auto* preprocess = app.add_subcommand("preprocess", "Anonymize entities and build the vocabulary");
  std::string normal, simple, normal_entities, simple_entities, out_dir, prefix = "train",
                                                                         reuse_vocab;
  preprocess->add_option("--normal", normal, "Raw normal sentences")->required();
  preprocess->add_option("--simple", simple, "Raw simple sentences")->required();
  preprocess->add_option("--normal-entities", normal_entities, "Entity sidecar for --normal");
  preprocess->add_option("--simple-entities", simple_entities, "Entity sidecar for --simple");
  preprocess->add_option("--out-dir", out_dir, "Output directory")->required();
  preprocess->add_option("--prefix", prefix, "Output file prefix");
  preprocess->add_option("--reuse-vocab", reuse_vocab, "Encode against an existing vocabulary");

  auto* train = app.add_subcommand("train", "Train a model");

  auto* decode = app.add_subcommand("decode", "Simplify sentences with a trained model");
  std::string input, entities;
  decode->add_option("--input", input, "Tokenized input, one sentence per line")->required();
  decode->add_option("--entities", entities, "Entity maps for placeholder restoration");

  auto* evaluate = app.add_subcommand("evaluate", "Score system outputs");
  std::string source;
  std::vector<std::string> systems, references;
  evaluate->add_option("--source", source, "Source sentences")->required();
  evaluate->add_option("--system", systems, "System output as NAME=PATH or PATH")->required();
  evaluate->add_option("--reference", references, "Reference file (repeatable)")->required();

  auto* ablate = app.add_subcommand("ablate", "Train and score a layers x heads grid");
  std::vector<std::size_t> grid_layers{1, 2}, grid_heads{1, 2}, grid_beams{1};
  ablate->add_option("--grid-layers", grid_layers, "Layer counts")->delimiter(',');
  ablate->add_option("--grid-heads", grid_heads, "Head counts")->delimiter(',');
  ablate->add_option("--grid-beams", grid_beams, "Beam sizes")->delimiter(',');

  CLI11_PARSE(app, argc, argv);
  kas_set_verbose(verbose ? 1 : 0);

  kas_config* config = nullptr;
  if (const auto s = kas_config_new(&config); s != KAS_OK) return report(s);
  struct Guard {
    kas_config* c;
    ~Guard() { kas_config_free(c); }
  } guard{config};

  if (!config_file.empty()) {
    if (const auto s = kas_config_load_file(config, config_file.c_str()); s != KAS_OK) {
      return report(s);
    }
  }
  for (const auto& key : keys) {
    if (app.count(flag_name(key)) == 0) continue;
    if (const auto s = kas_config_set(config, key.c_str(), flag_values[key].c_str());
        s != KAS_OK) {
      return report(s);
    }
  }
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "kasimp: --set expects key=value, got '%s'\n", item.c_str());
      return static_cast<int>(KAS_ERR_ARGUMENT);
    }
    const auto key = item.substr(0, eq), value = item.substr(eq + 1);
    if (const auto s = kas_config_set(config, key.c_str(), value.c_str()); s != KAS_OK) {
      return report(s);
    }
  }

  if (*preprocess) {
    Owned stats;
    const auto s = kas_preprocess(
        config, normal.c_str(), simple.c_str(),
        normal_entities.empty() ? nullptr : normal_entities.c_str(),
        simple_entities.empty() ? nullptr : simple_entities.c_str(), out_dir.c_str(),
        prefix.c_str(), reuse_vocab.empty() ? nullptr : reuse_vocab.c_str(), &stats.text);
    if (s != KAS_OK) return report(s);
    std::fputs(stats.str().c_str(), stdout);
  } else if (*train) {
    Owned summary;
    if (const auto s = kas_train(config, &summary.text); s != KAS_OK) return report(s);
    std::fputs(summary.str().c_str(), stdout);
  } else if (*decode) {
    Owned output;
    const auto s = kas_decode_file(config, input.c_str(),
                                   entities.empty() ? nullptr : entities.c_str(), &output.text);
    if (s != KAS_OK) return report(s);
    Owned target;
    kas_config_get(config, "output", &target.text);
    if (target.str().empty()) std::fputs(output.str().c_str(), stdout);
  } else if (*evaluate) {
    std::vector<std::string> names, paths;
    for (const auto& item : systems) {
      const auto eq = item.find('=');
      names.push_back(eq == std::string::npos ? std::string() : item.substr(0, eq));
      paths.push_back(eq == std::string::npos ? item : item.substr(eq + 1));
    }
    std::vector<const char*> name_ptrs, path_ptrs, ref_ptrs;
    for (std::size_t i = 0; i < names.size(); ++i) {
      name_ptrs.push_back(names[i].empty() ? nullptr : names[i].c_str());
      path_ptrs.push_back(paths[i].c_str());
    }
    for (const auto& r : references) ref_ptrs.push_back(r.c_str());
    Owned table;
    const auto s = kas_evaluate(config, source.c_str(), name_ptrs.data(), path_ptrs.data(),
                                path_ptrs.size(), ref_ptrs.data(), ref_ptrs.size(), nullptr,
                                &table.text);
    if (s != KAS_OK) return report(s);
    std::fputs(table.str().c_str(), stdout);
  } else if (*ablate) {
    Owned table;
    const auto s = kas_ablate(config, grid_layers.data(), grid_layers.size(), grid_heads.data(),
                              grid_heads.size(), grid_beams.data(), grid_beams.size(), nullptr,
                              &table.text);
    if (s != KAS_OK) return report(s);
    std::fputs(table.str().c_str(), stdout);
  }
  return 0;
}
