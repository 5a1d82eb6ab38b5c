#include "kasimp/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kasimp/binary_io.hpp"
#include "kasimp/error.hpp"

namespace kas {

namespace {

constexpr char kMagic[8] = {'K', 'A', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint64_t kText = 0;
constexpr std::uint64_t kArray = 1;

struct Entry {
  std::uint64_t kind = kText;
  std::string text;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

void write_entry(std::ostream& out, const std::string& name, const Entry& e) {
  binary::write_string(out, name);
  binary::write_u64(out, e.kind);
  if (e.kind == kText) {
    binary::write_string(out, e.text);
  } else {
    binary::write_u64(out, e.shape.size());
    for (auto d : e.shape) binary::write_u64(out, d);
    binary::write_doubles(out, e.values);
  }
}

Entry text_entry(std::string text) { return {kText, std::move(text), {}, {}}; }

Entry array_entry(const Shape& shape, std::span<const double> values) {
  Entry e;
  e.kind = kArray;
  e.shape.assign(shape.begin(), shape.end());
  e.values.assign(values.begin(), values.end());
  return e;
}

std::string bits_text(double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  return std::to_string(bits);
}

double bits_value(const std::string& text) {
  std::uint64_t bits = 0;
  std::from_chars(text.data(), text.data() + text.size(), bits);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::vector<std::pair<std::string, Entry>> entries;
  entries.emplace_back("config", text_entry(config.to_text()));
  entries.emplace_back("vocab_size", text_entry(std::to_string(model.vocab_size)));
  entries.emplace_back("rng", text_entry(rng_state));
  entries.emplace_back("step", text_entry(std::to_string(step)));
  entries.emplace_back("best_score", text_entry(bits_text(best_score)));
  std::string order_text = std::to_string(data_cursor);
  for (auto i : data_order) order_text += " " + std::to_string(i);
  entries.emplace_back("data_order", text_entry(order_text));
  for (const auto& [name, tensor] : params) {
    entries.emplace_back("param/" + name, array_entry(tensor.shape(), tensor.data()));
  }
  for (std::size_t i = 0; i < accumulators.size(); ++i) {
    entries.emplace_back("adagrad/" + params.at(i).first,
                         array_entry({accumulators[i].size()}, accumulators[i]));
  }

  // Written to a sibling file first so an interrupted save keeps the old one.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::kIo, "cannot write checkpoint " + path);
    out.write(kMagic, 8);
    binary::write_u64(out, entries.size());
    for (const auto& [name, e] : entries) write_entry(out, name, e);
    require(out.good(), ErrorKind::kIo, "failed writing checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::equal(magic, magic + 8, kMagic), ErrorKind::kFormat,
          path + " is not a checkpoint");
  const auto count = binary::read_u64(in);
  std::map<std::string, Entry> entries;
  std::vector<std::string> order;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = binary::read_string(in, 1 << 16);
    Entry e;
    e.kind = binary::read_u64(in);
    if (e.kind == kText) {
      e.text = binary::read_string(in);
    } else {
      require(e.kind == kArray, ErrorKind::kFormat, path + ": unknown entry kind");
      const auto rank = binary::read_u64(in);
      require(rank <= 8, ErrorKind::kFormat, path + ": corrupt tensor rank");
      for (std::uint64_t r = 0; r < rank; ++r) e.shape.push_back(binary::read_u64(in));
      e.values = binary::read_doubles(in);
    }
    order.push_back(name);
    entries.emplace(name, std::move(e));
  }

  auto text = [&](const std::string& name) -> const std::string& {
    const auto it = entries.find(name);
    require(it != entries.end() && it->second.kind == kText, ErrorKind::kFormat,
            path + ": missing entry '" + name + "'");
    return it->second.text;
  };

  Checkpoint ckpt;
  ckpt.config.load_text(text("config"));
  ckpt.model = ckpt.config.model;
  ckpt.model.vocab_size = std::stoull(text("vocab_size"));
  ckpt.rng_state = text("rng");
  ckpt.step = std::stoull(text("step"));
  ckpt.best_score = bits_value(text("best_score"));
  {
    std::istringstream order(text("data_order"));
    order >> ckpt.data_cursor;
    for (std::uint64_t i = 0; order >> i;) ckpt.data_order.push_back(i);
  }
  for (const auto& name : order) {
    if (name.rfind("param/", 0) != 0) continue;
    const auto& e = entries.at(name);
    Shape shape(e.shape.begin(), e.shape.end());
    require(shape_size(shape) == e.values.size(), ErrorKind::kFormat,
            path + ": shape mismatch in '" + name + "'");
    ckpt.params.emplace_back(name.substr(6), Tensor::from(shape, e.values));
  }
  for (const auto& [name, tensor] : ckpt.params) {
    const auto it = entries.find("adagrad/" + name);
    if (it == entries.end()) break;
    require(it->second.values.size() == tensor.size(), ErrorKind::kFormat,
            path + ": optimizer state size mismatch for '" + name + "'");
    ckpt.accumulators.push_back(it->second.values);
  }
  require(ckpt.accumulators.empty() || ckpt.accumulators.size() == ckpt.params.size(),
          ErrorKind::kFormat, path + ": incomplete optimizer state");
  return ckpt;
}

void restore_params(const Checkpoint& checkpoint, ModelParams& params) {
  auto named = params.named();
  require(named.size() == checkpoint.params.size(), ErrorKind::kFormat,
          "checkpoint holds " + std::to_string(checkpoint.params.size()) +
              " tensors, model expects " + std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, source] = checkpoint.params[i];
    auto& [expected, target] = named[i];
    require(name == expected && source.shape() == target.shape(), ErrorKind::kFormat,
            "checkpoint tensor '" + name + "' does not match model tensor '" + expected + "'");
    std::copy(source.data().begin(), source.data().end(), target.mutable_data().begin());
  }
}

}  // namespace kas
