#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "topoloc/tensor.hpp"

namespace topoloc {

/// Learning-rate group a parameter belongs to. Buffers are state that is
/// saved with the model but never touched by the optimizer.
enum class ParamGroup { main, encoder, buffer };

const char* to_string(ParamGroup g);
ParamGroup param_group_from_string(const std::string& s);

struct Param {
  std::string name;
  Tensor value;
  ParamGroup group = ParamGroup::main;
};

/// Ordered registry of named parameters.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor value, ParamGroup group = ParamGroup::main);

  std::size_t size() const { return params_.size(); }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& operator[](std::size_t i) { return params_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Number of trainable scalars (buffers excluded).
  std::size_t trainable_count() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Param> params_;
};

/// Glorot-uniform fill for a fan_in x fan_out weight.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

// Checkpoint: a text file with one header line, then per parameter a
// `param <name> <group> <rows> <cols>` line followed by the values as C99
// hexadecimal floats, so a save/load round trip is bit-exact.
void write_checkpoint(std::ostream& os, const ParamSet& params);
ParamSet read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace topoloc
