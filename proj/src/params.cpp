#include "spgan/params.hpp"

#include <algorithm>

namespace spgan {

void ParamStore::add(std::string name, Tensor t) {
    if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(t));
}

Tensor& ParamStore::at(const std::string& name) {
    for (auto& [n, t] : entries_)
        if (n == name) return t;
    throw ConfigError("no parameter named '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
}

bool ParamStore::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

int64_t ParamStore::total_numel() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
}

void ParamStore::set_requires_grad(bool value) {
    for (auto& [name, t] : entries_) t.set_requires_grad(value);
}

}  // namespace spgan
