#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "hsr/error.hpp"
#include "hsr/tensor.hpp"

namespace hsr {

/// Named tensor collection. Iteration order is lexicographic by name, which fixes
/// the order of serialization and of optimizer updates.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void set(const std::string& name, Tensor t) { tensors_.insert_or_assign(name, std::move(t)); }

  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    require(it != tensors_.end(), "parameter '", name, "' not found");
    return it->second;
  }

  Tensor& get(const std::string& name) {
    auto it = tensors_.find(name);
    require(it != tensors_.end(), "parameter '", name, "' not found");
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const noexcept { return tensors_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : tensors_) out.push_back(k);
    return out;
  }

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  bool operator==(const ParamStore&) const = default;

 private:
  Map tensors_;
};

/// Sum of element counts over all tensors.
inline std::size_t count_params(const ParamStore& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : p) n += t.size();
  return n;
}

}  // namespace hsr
