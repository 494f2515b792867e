#pragma once

#include <string>
#include <utility>
#include <vector>

#include "spgan/tensor.hpp"

namespace spgan {

// Insertion-ordered named tensors. Order is part of the checkpoint layout, so it must be
// a pure function of the network config.
class ParamStore {
   public:
    using Entry = std::pair<std::string, Tensor>;

    void add(std::string name, Tensor t);
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    size_t size() const { return entries_.size(); }
    int64_t total_numel() const;

    void zero_grad();
    void set_requires_grad(bool value);

   private:
    std::vector<Entry> entries_;
};

}  // namespace spgan
