#pragma once

// Colored labelled ordered trees, the killed set, barrier trees, and the
// exploration operator that couples tree exploration with the order book.
//
// Genealogy is critical Galton-Watson with geometric(1/2) offspring and edge
// labels i.i.d. like J. All randomness of a tree is keyed per node: a node's
// offspring coins and its children's keys derive from its own key, and a
// node's edge increment derives from its key. Any traversal order (eager DFS,
// label-driven exploration, pruned walks) therefore sees the same tree.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lobtree/lob_sim.hpp"
#include "lobtree/measures.hpp"
#include "lobtree/rng.hpp"

namespace lobtree {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Color : std::uint8_t { white, green, red };

/// Keyed randomness of one node.
struct NodeKey {
    std::uint64_t value = 0;

    /// Whether the node has a child with index `i`, given it has children 0..i-1.
    bool has_child(std::uint32_t i) const noexcept {
        return (mix64(value ^ 0x243f6a8885a308d3ULL, i) >> 63) != 0;
    }
    NodeKey child(std::uint32_t i) const noexcept { return {mix64(value ^ 0x13198a2e03707344ULL, i)}; }
    /// Edge increment between this node and its parent.
    std::int64_t increment(const JumpDistribution& jumps) const noexcept {
        return jumps.sample(to_unit(mix64(value ^ 0xa4093822299f31d0ULL)));
    }
};

struct TreeNode {
    NodeId parent = kNoNode;
    NodeId first_child = kNoNode;
    NodeId last_child = kNoNode;
    NodeId next_sibling = kNoNode;
    std::int32_t child_count = 0;
    std::int32_t depth = 1;  ///< root has depth 1
    std::int64_t label = 0;
    std::int64_t increment = 0;  ///< 0 for the root
    Color color = Color::white;
    NodeKey key;
};

/// Arena tree; node ids are preorder (lexicographic) ranks.
class ColoredTree {
public:
    ColoredTree() = default;

    /// Single green root with label x.
    static ColoredTree single(std::int64_t x, NodeKey key = {});

    /// Appends a child at the end of `parent`'s child list. Node ids stay
    /// preorder ranks only when children are appended in DFS order.
    NodeId add_child(NodeId parent, std::int64_t increment, NodeKey key = {});

    NodeId root() const noexcept { return nodes_.empty() ? kNoNode : 0; }
    std::size_t size() const noexcept { return nodes_.size(); }
    const TreeNode& node(NodeId v) const { return nodes_.at(static_cast<std::size_t>(v)); }
    TreeNode& node(NodeId v) { return nodes_.at(static_cast<std::size_t>(v)); }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

    std::vector<NodeId> children(NodeId v) const;

    std::int64_t root_label() const { return node(0).label; }
    /// Max depth, with |root| = 1.
    std::int32_t height() const noexcept;
    /// Largest label.
    std::int64_t psi_star() const noexcept;

    /// Nodes reached from a depth cap got no children generated.
    bool depth_truncated = false;

    /// Resets to the initial coloring: root green, everything else white.
    void reset_colors();

    /// `depth label color` lines, indented by depth.
    std::string dump() const;

private:
    std::vector<TreeNode> nodes_;
};

/// Tree generation stopped at the node cap.
struct Capped {
    std::size_t partial_size = 0;
};

/// Eager DFS sample of T_x. Nodes at depth `depth_cap` get no children.
std::variant<ColoredTree, Capped> sample_tree(std::int64_t x, const JumpDistribution& jumps, Stream& rng,
                                              std::size_t node_cap = 10'000'000,
                                              std::int32_t depth_cap = std::numeric_limits<std::int32_t>::max());

/// Same, from an explicit root key.
std::variant<ColoredTree, Capped> sample_tree_from_key(std::int64_t x, NodeKey root, const JumpDistribution& jumps,
                                                       std::size_t node_cap = 10'000'000,
                                                       std::int32_t depth_cap = std::numeric_limits<std::int32_t>::max());

/// Killed nodes: label below the root's while every strict ancestor is at
/// or above it. Returned in preorder.
std::vector<NodeId> killed_set(const ColoredTree& tree);

/// Prunes all descendants of killed nodes (killed nodes kept).
ColoredTree barrier_tree(const ColoredTree& tree);

/// Replaces every label by max(label, 0).
ColoredTree clamp_labels(const ColoredTree& tree);

/// Number of nodes per generation (index 0 = root generation).
std::vector<std::int64_t> generation_sizes(const ColoredTree& tree);

enum class StepKind : std::uint8_t { green, red };

/// One application of the exploration operator.
struct ExplorationStep {
    StepKind kind = StepKind::green;
    std::int64_t label = 0;  ///< label of the node that changed color
};

struct ExplorationTrace {
    std::int64_t tau = 0;
    std::int64_t barrier_size = 0;  ///< |B(T)|
    std::int64_t killed = 0;        ///< |K(T)|
    std::vector<ExplorationStep> steps;  ///< recorded when requested

    /// Green-label measure after k steps (requires recorded steps).
    std::map<std::int64_t, std::int64_t> green_measure(std::int64_t k, std::int64_t root_label) const;

    /// `k,event,node_label` lines.
    std::string to_csv() const;
};

/// Runs the exploration on a tree in its initial coloring until the top
/// green node's label falls below the root's, or no green node remains.
/// Ties among top-label green nodes go to the last in lexicographic order.
/// Leaves the final coloring on the tree. Checks tau = 2|B| - |K| - 1 and
/// throws std::logic_error if it fails.
ExplorationTrace explore(ColoredTree& tree, bool record_steps = false);

/// Options for the frontier-only exploration of B(T).
struct LazyExploreOptions {
    /// Stop after this many steps (0 = unlimited); the result is then flagged.
    std::int64_t max_steps = 0;
    /// Nodes with label >= ceiling are created but not expanded.
    std::optional<std::int64_t> label_ceiling;
    /// Nodes with depth >= ceiling are created but not expanded.
    std::optional<std::int32_t> depth_ceiling;
    /// Stop as soon as a node with label >= this value is created.
    std::optional<std::int64_t> stop_at_label;
    /// Stop as soon as a node with depth >= this value is created.
    std::optional<std::int32_t> stop_at_depth;
    bool record_steps = false;
    /// Called once per created node of B(T) with (label, depth, killed).
    std::function<void(std::int64_t, std::int32_t, bool)> on_node;
};

struct LazyExploreResult {
    std::int64_t steps = 0;          ///< equals tau when run to the end without pruning
    std::int64_t barrier_size = 0;   ///< created nodes of B(T)
    std::int64_t killed = 0;
    std::int64_t psi_star = 0;       ///< largest label among created nodes
    std::int32_t height = 0;         ///< largest depth among created nodes
    std::int64_t pruned = 0;         ///< nodes left unexpanded by a ceiling
    bool step_capped = false;
    bool stopped_early = false;      ///< a stop_at_* condition fired
    std::vector<ExplorationStep> trace;

    bool complete() const noexcept { return !step_capped && !stopped_early && pruned == 0; }
};

/// Exploration of B(T_x) keeping only the green frontier in memory. Nodes are
/// generated on first visit; descendants of killed nodes are never generated.
/// Ties at the top label go to the last node in lexicographic order, as in
/// explore().
LazyExploreResult explore_lazy(std::int64_t x, NodeKey root, const JumpDistribution& jumps,
                               const LazyExploreOptions& options = {});

/// Visits nodes of the full tree T_x (no barrier) in DFS order, not expanding
/// nodes with label >= ceiling. Returns the number of unexpanded nodes.
std::int64_t walk_full_tree(std::int64_t x, NodeKey root, const JumpDistribution& jumps, std::int64_t ceiling,
                            const std::function<void(std::int64_t label, std::int32_t depth)>& on_node,
                            std::size_t node_cap = 100'000'000);

/// Upper bound on the expected number of descendants of a node whose label
/// is at least `drop` below it, from the exponential-moment bound
/// P(S_m <= -drop) <= exp(-k drop) E(exp(-k J))^m optimised over k.
double descendant_drop_bound(const JumpDistribution& jumps, double drop);

/// One excursion generated by exploring B_+(T_{a+1}) with Exp(2 lambda) jump
/// epochs.
struct TreeExcursion {
    std::int64_t jump_count = 0;   ///< tau + 1 (opening add included)
    std::int64_t tau = 0;
    std::int64_t height = 0;       ///< psi*(B_+) - a
    std::int64_t deposited_below = 0;  ///< |K|
    double duration = 0.0;         ///< S(tau)
    bool capped = false;
    std::vector<BookDelta> embedded_path;  ///< opening add included
    std::vector<double> epochs;            ///< jump times relative to g
};

TreeExcursion exploration_to_book_path(Level a, NodeKey root, const ModelParams& params, Stream& time_rng,
                                       std::int64_t max_steps = 0, bool record_path = false);

/// Depth-first contour: starts at 1 (root), moves +-1, ends at 0.
std::vector<std::int32_t> contour(const ColoredTree& tree);
std::int64_t visits(const std::vector<std::int32_t>& contour, std::int32_t m);
/// Whether the contour reaches u before 0.
bool hits(const std::vector<std::int32_t>& contour, std::int32_t u);

/// A forest with one tree T_a per atom of an initial book.
struct Forest {
    struct Root {
        Level label = 0;
        NodeKey key;
    };
    std::vector<Root> roots;
};

Forest sample_forest(const OrderBook& initial, Stream& rng);

/// Explores a forest with labels generated as (parent + J)^+, producing the
/// embedded book path until no green node remains (the book is empty).
struct ForestPath {
    std::vector<BookDelta> deltas;
    bool capped = false;
};
ForestPath explore_forest(const Forest& forest, const JumpDistribution& jumps, std::int64_t max_steps = 0);

enum class Condition : std::uint8_t { psi_star, tau, height };

struct ConditionedSample {
    ColoredTree tree;
    std::uint64_t attempts = 0;
    std::uint64_t capped = 0;
    double acceptance_rate() const noexcept { return attempts == 0 ? 0.0 : 1.0 / static_cast<double>(attempts); }
};

class BudgetExhausted : public std::runtime_error {
public:
    BudgetExhausted(std::uint64_t attempts, std::uint64_t capped);
    std::uint64_t attempts;
    std::uint64_t capped;
};

/// Rejection sample of T_x given psi*(B(T)) > u, tau(T) > u, or h(T) > u.
/// Keys whose check or materialisation exceeds `node_cap` count as capped
/// and as attempts.
ConditionedSample sample_conditioned(Condition condition, std::int64_t u, std::int64_t x,
                                     const JumpDistribution& jumps, Stream& rng, std::uint64_t budget,
                                     std::size_t node_cap = 10'000'000);

/// Whether a tree keyed by `root` meets the condition, decided lazily;
/// empty when undecided after `max_steps` exploration steps or visited nodes
/// (0 = unlimited).
std::optional<bool> meets_condition(Condition condition, std::int64_t u, std::int64_t x, NodeKey root,
                                    const JumpDistribution& jumps, std::int64_t max_steps = 0);

}  // namespace lobtree
