#pragma once

#include "cfbound/scm.hpp"

#include <span>
#include <vector>

namespace cfbound {

/// Non-negative potential over an ordered scope, row-major with the last
/// scope variable varying fastest. Scopes are kept sorted by VarId.
struct Factor {
    std::vector<VarId> scope;
    std::vector<int> cards;
    std::vector<double> values;

    static Factor scalar(double value) { return Factor{{}, {}, {value}}; }
    std::size_t size() const { return values.size(); }
    bool contains(VarId v) const;
};

/// Product of all factors with `eliminate` summed out. Pass -1 to keep every
/// variable. Intermediate products are never materialised.
Factor sum_product(std::span<const Factor* const> factors, VarId eliminate);

/// Marginal of a factor onto a single variable of its scope.
std::vector<double> marginal_onto(const Factor& f, VarId v);

}  // namespace cfbound
