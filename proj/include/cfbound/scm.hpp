#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cfbound {

using VarId = int;

enum class VarKind { endogenous, exogenous };

struct Variable {
    std::string name;
    int cardinality = 0;
    VarKind kind = VarKind::endogenous;
};

/// Table-valued structural equation. `table[i]` is the child state for the
/// i-th parent configuration; configurations are row-major over `parents`
/// with the last-listed parent varying fastest.
struct StructuralEquation {
    VarId child = -1;
    std::vector<VarId> parents;
    std::vector<int> table;
    /// Set for constant maps produced by an intervention. Such equations are
    /// exempt from the surjectivity requirement.
    bool intervened = false;
};

/// Deterministic selector S := g(parents). `table` holds 0/1 per parent
/// configuration, indexed like a structural equation table.
struct Selector {
    std::vector<std::string> parents;
    std::vector<int> table;
};

/// Full endogenous configuration, ordered as `Scm::observed()`.
using Config = std::vector<int>;

/// One probability vector per exogenous variable, ordered as `Scm::exogenous()`.
struct ExogenousAssignment {
    std::vector<std::vector<double>> pmfs;

    std::size_t size() const { return pmfs.size(); }
    const std::vector<double>& operator[](std::size_t i) const { return pmfs[i]; }
    std::vector<double>& operator[](std::size_t i) { return pmfs[i]; }
};

/// Mixed-radix index of `states` over `cards`, last position fastest.
std::size_t mixed_radix_index(std::span<const int> cards, std::span<const int> states);

/// Inverse of mixed_radix_index.
std::vector<int> mixed_radix_decode(std::span<const int> cards, std::size_t index);

/// Product of cardinalities; throws CapacityExceeded past `cap`.
std::uint64_t checked_product(std::span<const int> cards, std::uint64_t cap);

/// Immutable discrete structural causal model. A model is fully specified
/// (FSCM) when every exogenous variable carries a probability vector and
/// partially specified (PSCM) otherwise. Build instances with ScmBuilder.
class Scm {
public:
    Scm() = default;

    std::size_t size() const { return vars_.size(); }
    const Variable& variable(VarId id) const { return vars_.at(static_cast<std::size_t>(id)); }
    const std::vector<Variable>& variables() const { return vars_; }
    std::optional<VarId> find(std::string_view name) const;
    /// Throws ModelError for unknown names.
    VarId id_of(std::string_view name) const;
    int cardinality(VarId id) const { return variable(id).cardinality; }
    bool is_exogenous(VarId id) const { return variable(id).kind == VarKind::exogenous; }

    /// All endogenous variables in declaration order (selector included).
    const std::vector<VarId>& endogenous() const { return endogenous_; }
    /// Endogenous variables that are observed in data (selector excluded).
    const std::vector<VarId>& observed() const { return observed_; }
    const std::vector<VarId>& exogenous() const { return exogenous_; }
    /// Position of an exogenous variable within exogenous(), or -1.
    int exogenous_ordinal(VarId id) const { return exo_ordinal_.at(static_cast<std::size_t>(id)); }
    /// Position of an observed endogenous variable within observed(), or -1.
    int observed_ordinal(VarId id) const { return obs_ordinal_.at(static_cast<std::size_t>(id)); }

    const StructuralEquation& equation(VarId child) const;
    const std::vector<VarId>& parents(VarId id) const;
    const std::vector<VarId>& children(VarId id) const { return children_.at(static_cast<std::size_t>(id)); }
    /// Topological order over every variable, ties broken by declaration order.
    const std::vector<VarId>& topological_order() const { return topo_; }

    const std::optional<std::vector<double>>& pmf(VarId exo) const { return pmfs_.at(static_cast<std::size_t>(exo)); }
    bool is_full() const;
    /// Every observed endogenous variable has exactly one exogenous parent and
    /// that exogenous variable has exactly one child.
    bool is_markovian() const;
    /// Every observed endogenous variable has at most one exogenous parent.
    bool single_exogenous_parent() const;

    std::optional<VarId> selector() const { return selector_; }

    /// Exogenous probability vectors currently attached (FSCM only).
    ExogenousAssignment assignment() const;
    /// Copy of this model with the given exogenous probability vectors.
    Scm with_assignment(const ExogenousAssignment& a) const;
    /// Copy with all exogenous probability vectors removed.
    Scm without_pmfs() const;

    /// Fills the endogenous entries of `full` (indexed by VarId) from its
    /// exogenous entries by evaluating structural equations in topological order.
    void propagate(std::vector<int>& full) const;

    /// Child state of `child` under the full assignment `full` (indexed by VarId).
    int evaluate(VarId child, std::span<const int> full) const;

    /// Names of observed variables, in observed() order.
    std::vector<std::string> observed_names() const;

    bool operator==(const Scm& other) const;

private:
    friend class ScmBuilder;

    std::vector<Variable> vars_;
    std::vector<std::optional<StructuralEquation>> equations_;
    std::vector<std::optional<std::vector<double>>> pmfs_;
    std::optional<VarId> selector_;
    std::unordered_map<std::string, VarId> index_;

    std::vector<VarId> endogenous_;
    std::vector<VarId> observed_;
    std::vector<VarId> exogenous_;
    std::vector<int> exo_ordinal_;
    std::vector<int> obs_ordinal_;
    std::vector<std::vector<VarId>> children_;
    std::vector<VarId> topo_;
};

class ScmBuilder {
public:
    ScmBuilder() = default;
    /// Starts from an existing model (all variables, equations and PMFs).
    explicit ScmBuilder(const Scm& base);

    VarId add_endogenous(std::string name, int cardinality);
    VarId add_exogenous(std::string name, int cardinality,
                        std::optional<std::vector<double>> pmf = std::nullopt);
    void set_equation(VarId child, std::vector<VarId> parents, std::vector<int> table,
                      bool intervened = false);
    void set_pmf(VarId exo, std::optional<std::vector<double>> pmf);
    /// Marks an endogenous Boolean variable with endogenous parents only as the selector.
    void mark_selector(VarId id);
    std::optional<VarId> find(std::string_view name) const;

    /// Validates every structural invariant and returns the model.
    Scm build() const;

private:
    std::vector<Variable> vars_;
    std::vector<std::optional<StructuralEquation>> equations_;
    std::vector<std::optional<std::vector<double>>> pmfs_;
    std::optional<VarId> selector_;
};

/// Normalisation tolerance used when ingesting probability vectors.
inline constexpr double kPmfTolerance = 1e-9;

/// Default cap on enumerated joint state spaces.
inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 22;

/// Checks non-negativity and unit sum within kPmfTolerance, renormalising in
/// place. Throws ModelError otherwise.
void normalize_pmf(std::vector<double>& pmf, std::string_view what);

/// Endogenous DAG used as input to build_conservative.
struct DagSpec {
    struct Node {
        std::string name;
        int cardinality = 2;
        std::vector<std::string> parents;
        /// Name of the exogenous parent to create; defaults to "U_<name>".
        std::string exogenous_name;
    };
    std::vector<Node> nodes;
};

/// Partial SCM with one exogenous parent per endogenous node and conservative
/// structural equations: exogenous state u indexes the function whose value at
/// parent configuration c is the c-th base-|child| digit of u (least
/// significant digit first). The exogenous variable is the first listed parent.
/// Throws CapacityExceeded when an exogenous cardinality would exceed `cap`.
Scm build_conservative(const DagSpec& dag, std::uint64_t cap = kDefaultEnumerationCap);

/// Cardinality of the conservative exogenous variable for a child with the
/// given endogenous parent cardinalities.
std::uint64_t conservative_cardinality(int child_cardinality, std::span<const int> parent_cards,
                                       std::uint64_t cap = kDefaultEnumerationCap);

/// True iff every observed endogenous configuration is produced by some joint
/// exogenous state. Enumerates the joint exogenous space; throws
/// CapacityExceeded above `cap`.
bool check_joint_surjectivity(const Scm& model, std::uint64_t cap = kDefaultEnumerationCap);

/// Adds Boolean endogenous variable "S" whose structural equation is the selector.
Scm embed_selector(const Scm& model, const Selector& sel);

/// Removes the embedded selector, if any.
Scm strip_selector(const Scm& model);

/// Selector currently embedded in `model`.
std::optional<Selector> extract_selector(const Scm& model);

/// Selector bound to the observed() positions of a model, for evaluating g(x).
class BoundSelector {
public:
    BoundSelector(const Scm& model, const Selector& sel);
    int operator()(const Config& x) const;

private:
    std::vector<int> positions_;
    std::vector<int> cards_;
    std::vector<int> table_;
};

/// Groups observed endogenous variables connected through shared exogenous parents.
std::vector<std::vector<VarId>> c_components(const Scm& model);

}  // namespace cfbound
