#include "topoloc/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace topoloc {

namespace {
constexpr const char* kCheckpointMagic = "topoloc-checkpoint 1";
}

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::main: return "main";
    case ParamGroup::encoder: return "encoder";
    case ParamGroup::buffer: return "buffer";
  }
  return "main";
}

ParamGroup param_group_from_string(const std::string& s) {
  if (s == "main") return ParamGroup::main;
  if (s == "encoder") return ParamGroup::encoder;
  if (s == "buffer") return ParamGroup::buffer;
  throw std::invalid_argument("unknown parameter group '" + s + "'");
}

std::size_t ParamSet::add(std::string name, Tensor value, ParamGroup group) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  params_.push_back({std::move(name), std::move(value), group});
  return params_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto i = find(name);
  if (!i) throw std::out_of_range("no parameter named '" + name + "'");
  return *i;
}

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.group != ParamGroup::buffer) n += p.value.size();
  return n;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].group != b[i].group || !(a[i].value == b[i].value))
      return false;
  }
  return true;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w(fan_in, fan_out);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
  return w;
}

void write_checkpoint(std::ostream& os, const ParamSet& params) {
  os << kCheckpointMagic << '\n';
  char buf[64];
  for (const auto& p : params) {
    os << "param " << p.name << ' ' << to_string(p.group) << ' ' << p.value.rows() << ' '
       << p.value.cols() << '\n';
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", p.value[i]);
      os << buf << (i + 1 == p.value.size() || (i + 1) % 8 == 0 ? '\n' : ' ');
    }
  }
}

ParamSet read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic)
    throw std::runtime_error("checkpoint: missing header '" + std::string(kCheckpointMagic) + "'");
  ParamSet params;
  std::string tag;
  while (is >> tag) {
    if (tag != "param") throw std::runtime_error("checkpoint: expected 'param', got '" + tag + "'");
    std::string name, group;
    std::size_t rows = 0, cols = 0;
    if (!(is >> name >> group >> rows >> cols))
      throw std::runtime_error("checkpoint: malformed parameter header");
    std::vector<double> values(rows * cols);
    for (auto& v : values) {
      std::string tok;
      if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated values for '" + name + "'");
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        throw std::runtime_error("checkpoint: bad number '" + tok + "' in '" + name + "'");
    }
    params.add(name, Tensor(rows, cols, std::move(values)), param_group_from_string(group));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(os, params);
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace topoloc
