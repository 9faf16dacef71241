#include "cfbound/factor.hpp"

#include "cfbound/errors.hpp"

#include <algorithm>

namespace cfbound {

bool Factor::contains(VarId v) const { return std::binary_search(scope.begin(), scope.end(), v); }

Factor sum_product(std::span<const Factor* const> factors, VarId eliminate) {
    // Union scope, sorted.
    std::vector<VarId> all;
    std::vector<int> all_cards;
    for (const Factor* f : factors) {
        for (std::size_t i = 0; i < f->scope.size(); ++i) {
            auto it = std::lower_bound(all.begin(), all.end(), f->scope[i]);
            if (it == all.end() || *it != f->scope[i]) {
                all_cards.insert(all_cards.begin() + (it - all.begin()), f->cards[i]);
                all.insert(it, f->scope[i]);
            }
        }
    }

    Factor out;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i] == eliminate) continue;
        out.scope.push_back(all[i]);
        out.cards.push_back(all_cards[i]);
    }
    std::size_t out_size = 1;
    for (int c : out.cards) out_size *= static_cast<std::size_t>(c);
    out.values.assign(out_size, 0.0);

    // Strides of each factor (and of the output) along every union variable.
    const std::size_t nf = factors.size();
    const std::size_t nv = all.size();
    std::vector<std::size_t> strides((nf + 1) * nv, 0);
    auto fill_strides = [&](const std::vector<VarId>& scope, const std::vector<int>& cards, std::size_t row) {
        std::size_t stride = 1;
        for (std::size_t k = scope.size(); k-- > 0;) {
            const auto pos = static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), scope[k]) - all.begin());
            strides[row * nv + pos] = stride;
            stride *= static_cast<std::size_t>(cards[k]);
        }
    };
    for (std::size_t j = 0; j < nf; ++j) fill_strides(factors[j]->scope, factors[j]->cards, j);
    fill_strides(out.scope, out.cards, nf);

    std::vector<std::size_t> offsets(nf + 1, 0);
    std::vector<int> state(nv, 0);
    std::size_t total = 1;
    for (int c : all_cards) total *= static_cast<std::size_t>(c);

    for (std::size_t n = 0; n < total; ++n) {
        double v = 1.0;
        for (std::size_t j = 0; j < nf && v != 0.0; ++j) v *= factors[j]->values[offsets[j]];
        out.values[offsets[nf]] += v;
        // Odometer, last variable fastest.
        for (std::size_t i = nv; i-- > 0;) {
            if (++state[i] < all_cards[i]) {
                for (std::size_t j = 0; j <= nf; ++j) offsets[j] += strides[j * nv + i];
                break;
            }
            const auto back = static_cast<std::size_t>(all_cards[i] - 1);
            for (std::size_t j = 0; j <= nf; ++j) offsets[j] -= strides[j * nv + i] * back;
            state[i] = 0;
        }
    }
    return out;
}

std::vector<double> marginal_onto(const Factor& f, VarId v) {
    const auto it = std::find(f.scope.begin(), f.scope.end(), v);
    if (it == f.scope.end()) throw ModelError("variable not in factor scope");
    const auto pos = static_cast<std::size_t>(it - f.scope.begin());
    std::size_t inner = 1;
    for (std::size_t k = pos + 1; k < f.cards.size(); ++k) inner *= static_cast<std::size_t>(f.cards[k]);
    const auto card = static_cast<std::size_t>(f.cards[pos]);
    std::vector<double> out(card, 0.0);
    for (std::size_t i = 0; i < f.values.size(); ++i) out[(i / inner) % card] += f.values[i];
    return out;
}

}  // namespace cfbound
