#include "lobtree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace lobtree {

ColoredTree ColoredTree::single(std::int64_t x, NodeKey key) {
    ColoredTree t;
    TreeNode root;
    root.label = x;
    root.color = Color::green;
    root.key = key;
    t.nodes_.push_back(root);
    return t;
}

NodeId ColoredTree::add_child(NodeId parent, std::int64_t increment, NodeKey key) {
    if (parent < 0 || static_cast<std::size_t>(parent) >= nodes_.size())
        throw std::out_of_range("add_child: bad parent id");
    if (nodes_.size() >= static_cast<std::size_t>(std::numeric_limits<NodeId>::max()))
        throw std::length_error("tree arena full");
    const auto id = static_cast<NodeId>(nodes_.size());
    TreeNode child;
    child.parent = parent;
    child.depth = nodes_[parent].depth + 1;
    child.increment = increment;
    child.label = nodes_[parent].label + increment;
    child.key = key;
    nodes_.push_back(child);
    TreeNode& p = nodes_[parent];
    if (p.last_child == kNoNode)
        p.first_child = id;
    else
        nodes_[p.last_child].next_sibling = id;
    p.last_child = id;
    ++p.child_count;
    return id;
}

std::vector<NodeId> ColoredTree::children(NodeId v) const {
    std::vector<NodeId> out;
    for (NodeId c = node(v).first_child; c != kNoNode; c = node(c).next_sibling) out.push_back(c);
    return out;
}

std::int32_t ColoredTree::height() const noexcept {
    std::int32_t h = 0;
    for (const auto& n : nodes_) h = std::max(h, n.depth);
    return h;
}

std::int64_t ColoredTree::psi_star() const noexcept {
    std::int64_t m = std::numeric_limits<std::int64_t>::min();
    for (const auto& n : nodes_) m = std::max(m, n.label);
    return m;
}

void ColoredTree::reset_colors() {
    for (auto& n : nodes_) n.color = Color::white;
    if (!nodes_.empty()) nodes_.front().color = Color::green;
}

std::string ColoredTree::dump() const {
    std::ostringstream os;
    if (nodes_.empty()) return {};
    std::vector<NodeId> stack{0};
    while (!stack.empty()) {
        const NodeId v = stack.back();
        stack.pop_back();
        const auto& n = node(v);
        const char* color = n.color == Color::white ? "white" : n.color == Color::green ? "green" : "red";
        os << std::string(static_cast<std::size_t>(2 * (n.depth - 1)), ' ') << n.depth << ' ' << n.label << ' '
           << color << '\n';
        auto kids = children(v);
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
    }
    return os.str();
}

std::variant<ColoredTree, Capped> sample_tree_from_key(std::int64_t x, NodeKey root, const JumpDistribution& jumps,
                                                       std::size_t node_cap, std::int32_t depth_cap) {
    if (node_cap < 1) throw std::invalid_argument("node_cap must be >= 1");
    ColoredTree tree = ColoredTree::single(x, root);
    // (node, index of the next child to query)
    std::vector<std::pair<NodeId, std::uint32_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto& [v, next] = stack.back();
        const TreeNode& n = tree.node(v);
        if (n.depth >= depth_cap) {
            tree.depth_truncated = true;
            stack.pop_back();
            continue;
        }
        if (!n.key.has_child(next)) {
            stack.pop_back();
            continue;
        }
        if (tree.size() >= node_cap) return Capped{tree.size()};
        const NodeKey ck = n.key.child(next);
        ++next;
        const NodeId parent = v;
        const NodeId c = tree.add_child(parent, ck.increment(jumps), ck);
        tree.node(c).color = Color::white;
        stack.emplace_back(c, 0);
    }
    return tree;
}

std::variant<ColoredTree, Capped> sample_tree(std::int64_t x, const JumpDistribution& jumps, Stream& rng,
                                              std::size_t node_cap, std::int32_t depth_cap) {
    return sample_tree_from_key(x, NodeKey{rng()}, jumps, node_cap, depth_cap);
}

namespace {

// ancestors_ok[v]: every strict ancestor of v has label >= root label.
std::vector<char> ancestors_ok(const ColoredTree& tree) {
    std::vector<char> ok(tree.size(), 0);
    if (tree.size() == 0) return ok;
    const std::int64_t x = tree.root_label();
    // Parents precede children in arena order.
    ok[0] = 1;
    for (std::size_t v = 1; v < tree.size(); ++v) {
        const auto& n = tree.nodes()[v];
        ok[v] = ok[n.parent] && tree.nodes()[n.parent].label >= x;
    }
    return ok;
}

std::vector<NodeId> preorder(const ColoredTree& tree) {
    std::vector<NodeId> order;
    order.reserve(tree.size());
    if (tree.size() == 0) return order;
    std::vector<NodeId> stack{0};
    while (!stack.empty()) {
        const NodeId v = stack.back();
        stack.pop_back();
        order.push_back(v);
        std::vector<NodeId> kids = tree.children(v);
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
    }
    return order;
}

}  // namespace

std::vector<NodeId> killed_set(const ColoredTree& tree) {
    std::vector<NodeId> out;
    if (tree.size() == 0) return out;
    const auto ok = ancestors_ok(tree);
    const std::int64_t x = tree.root_label();
    for (NodeId v : preorder(tree))
        if (v != 0 && ok[v] && tree.node(v).label < x) out.push_back(v);
    return out;
}

ColoredTree barrier_tree(const ColoredTree& tree) {
    ColoredTree out;
    if (tree.size() == 0) return out;
    const auto ok = ancestors_ok(tree);
    std::vector<NodeId> remap(tree.size(), kNoNode);
    for (NodeId v : preorder(tree)) {
        if (!ok[v]) continue;
        const TreeNode& n = tree.node(v);
        if (v == 0) {
            out = ColoredTree::single(n.label, n.key);
            remap[0] = 0;
        } else {
            remap[v] = out.add_child(remap[n.parent], n.increment, n.key);
        }
        out.node(remap[v]).color = n.color;
    }
    out.depth_truncated = tree.depth_truncated;
    return out;
}

ColoredTree clamp_labels(const ColoredTree& tree) {
    ColoredTree out = tree;
    for (std::size_t v = 0; v < out.size(); ++v) {
        auto& n = out.node(static_cast<NodeId>(v));
        n.label = std::max<std::int64_t>(n.label, 0);
    }
    return out;
}

std::vector<std::int64_t> generation_sizes(const ColoredTree& tree) {
    std::vector<std::int64_t> z;
    for (const auto& n : tree.nodes()) {
        const auto g = static_cast<std::size_t>(n.depth - 1);
        if (g >= z.size()) z.resize(g + 1, 0);
        ++z[g];
    }
    return z;
}

std::map<std::int64_t, std::int64_t> ExplorationTrace::green_measure(std::int64_t k, std::int64_t root_label) const {
    if (k < 0 || k > static_cast<std::int64_t>(steps.size()))
        throw std::out_of_range("green_measure: step index outside the recorded trace");
    std::map<std::int64_t, std::int64_t> m{{root_label, 1}};
    for (std::int64_t i = 0; i < k; ++i) {
        const auto& s = steps[static_cast<std::size_t>(i)];
        if (s.kind == StepKind::green) {
            ++m[s.label];
        } else if (--m[s.label] == 0) {
            m.erase(s.label);
        }
    }
    return m;
}

std::string ExplorationTrace::to_csv() const {
    std::ostringstream os;
    os << "k,event,node_label\n";
    for (std::size_t i = 0; i < steps.size(); ++i)
        os << (i + 1) << ',' << (steps[i].kind == StepKind::green ? "green" : "red") << ',' << steps[i].label
           << '\n';
    return os.str();
}

ExplorationTrace explore(ColoredTree& tree, bool record_steps) {
    if (tree.size() == 0) throw std::invalid_argument("explore: empty tree");
    if (tree.node(0).color != Color::green) throw std::invalid_argument("explore: root must start green");
    for (std::size_t v = 1; v < tree.size(); ++v)
        if (tree.nodes()[v].color != Color::white)
            throw std::invalid_argument("explore: tree is not in its initial coloring");

    const auto order = preorder(tree);
    std::vector<std::int32_t> rank(tree.size());
    for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<std::int32_t>(i);
    std::vector<NodeId> next_white(tree.size());
    for (std::size_t v = 0; v < tree.size(); ++v) next_white[v] = tree.nodes()[v].first_child;

    const std::int64_t x = tree.root_label();
    // (label, lexicographic rank, id); the greatest element is gamma.
    std::set<std::tuple<std::int64_t, std::int32_t, NodeId>> greens{{x, rank[0], 0}};
    ExplorationTrace trace;
    trace.barrier_size = 1;

    while (!greens.empty()) {
        const auto [label, r, gamma] = *greens.rbegin();
        if (label < x) break;
        const NodeId child = next_white[gamma];
        if (child != kNoNode) {
            next_white[gamma] = tree.node(child).next_sibling;
            tree.node(child).color = Color::green;
            greens.emplace(tree.node(child).label, rank[child], child);
            ++trace.barrier_size;
            if (record_steps) trace.steps.push_back({StepKind::green, tree.node(child).label});
        } else {
            tree.node(gamma).color = Color::red;
            greens.erase(std::prev(greens.end()));
            if (record_steps) trace.steps.push_back({StepKind::red, label});
        }
        ++trace.tau;
    }
    trace.killed = static_cast<std::int64_t>(greens.size());
    if (trace.tau != 2 * trace.barrier_size - trace.killed - 1)
        throw std::logic_error("exploration step count violates tau = 2|B| - |K| - 1");
    return trace;
}

namespace {

struct Frontier {
    NodeKey key;
    std::int64_t label = 0;
    std::int32_t depth = 1;
    std::uint32_t next_child = 0;
    bool frozen = false;
};

// Green nodes grouped by label, each group a max-heap in lexicographic
// order. Created nodes keep (parent, child index, depth) so that any two can
// be ordered by lifting to a common depth and comparing the children of the
// deepest common ancestor. Roots of a forest have no parent and are ordered
// by their index.
class GreenFrontier {
public:
    explicit GreenFrontier(std::int64_t offset) : offset_(offset) {}

    std::int32_t add(std::int32_t parent, std::uint32_t index, NodeKey key, std::int64_t label,
                     std::int32_t depth, bool frozen) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back({parent, index, depth, key, label, 0, frozen});
        const auto g = static_cast<std::size_t>(label - offset_);
        if (g >= groups_.size()) groups_.resize(g + 1);
        auto& heap = groups_[g];
        heap.push_back(id);
        std::push_heap(heap.begin(), heap.end(), before_);
        top_ = std::max<std::int64_t>(top_, static_cast<std::int64_t>(g));
        return id;
    }

    /// Lexicographically last green node with the largest label, or -1.
    std::int32_t top() {
        while (top_ >= 0 && groups_[static_cast<std::size_t>(top_)].empty()) --top_;
        return top_ < 0 ? -1 : groups_[static_cast<std::size_t>(top_)].front();
    }

    void pop_top() {
        auto& heap = groups_[static_cast<std::size_t>(top_)];
        std::pop_heap(heap.begin(), heap.end(), before_);
        heap.pop_back();
    }

    struct Node {
        std::int32_t parent;
        std::uint32_t index;
        std::int32_t depth;
        NodeKey key;
        std::int64_t label;
        std::uint32_t next_child;
        bool frozen;
    };
    Node& node(std::int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }

private:
    struct Before {
        const std::vector<Node>* nodes;
        bool operator()(std::int32_t u, std::int32_t v) const {
            if (u == v) return false;
            const auto& n = *nodes;
            std::int32_t a = u, b = v;
            while (n[a].depth > n[b].depth) a = n[a].parent;
            while (n[b].depth > n[a].depth) b = n[b].parent;
            if (a == b) return n[u].depth < n[v].depth;
            while (n[a].parent != n[b].parent) {
                a = n[a].parent;
                b = n[b].parent;
            }
            return n[a].index < n[b].index;
        }
    };

    std::int64_t offset_;
    std::vector<Node> nodes_;
    std::vector<std::vector<std::int32_t>> groups_;
    std::int64_t top_ = -1;
    Before before_{&nodes_};
};

}  // namespace

LazyExploreResult explore_lazy(std::int64_t x, NodeKey root, const JumpDistribution& jumps,
                               const LazyExploreOptions& options) {
    LazyExploreResult res;
    // Only nodes with label >= x enter the frontier; killed nodes are counted.
    GreenFrontier greens(x);

    const auto created = [&](std::int64_t label, std::int32_t depth, bool killed) {
        ++res.barrier_size;
        res.psi_star = std::max(res.psi_star, label);
        res.height = std::max(res.height, depth);
        if (killed) ++res.killed;
        if (options.on_node) options.on_node(label, depth, killed);
        return (options.stop_at_label && label >= *options.stop_at_label) ||
               (options.stop_at_depth && depth >= *options.stop_at_depth);
    };
    const auto frozen = [&](std::int64_t label, std::int32_t depth) {
        return (options.label_ceiling && label >= *options.label_ceiling) ||
               (options.depth_ceiling && depth >= *options.depth_ceiling);
    };

    res.psi_star = x;
    {
        const bool f = frozen(x, 1);
        greens.add(-1, 0, root, x, 1, f);
        if (f) ++res.pruned;
        if (created(x, 1, false)) {
            res.stopped_early = true;
            return res;
        }
    }

    for (;;) {
        const std::int32_t id = greens.top();
        if (id < 0) break;
        if (options.max_steps != 0 && res.steps >= options.max_steps) {
            res.step_capped = true;
            break;
        }
        auto& gamma = greens.node(id);
        if (!gamma.frozen && gamma.key.has_child(gamma.next_child)) {
            const std::uint32_t index = gamma.next_child++;
            const NodeKey ck = gamma.key.child(index);
            const std::int64_t label = gamma.label + ck.increment(jumps);
            const std::int32_t depth = gamma.depth + 1;
            ++res.steps;
            if (options.record_steps) res.trace.push_back({StepKind::green, label});
            const bool killed = label < x;
            if (!killed) {
                const bool f = frozen(label, depth);
                if (f) ++res.pruned;
                greens.add(id, index, ck, label, depth, f);
            }
            if (created(label, depth, killed)) {
                res.stopped_early = true;
                break;
            }
        } else {
            if (options.record_steps) res.trace.push_back({StepKind::red, gamma.label});
            greens.pop_top();
            ++res.steps;
        }
    }
    return res;
}

std::int64_t walk_full_tree(std::int64_t x, NodeKey root, const JumpDistribution& jumps, std::int64_t ceiling,
                            const std::function<void(std::int64_t, std::int32_t)>& on_node, std::size_t node_cap) {
    std::int64_t pruned = 0;
    std::size_t visited = 0;
    std::vector<Frontier> stack{{root, x, 1, 0, false}};
    on_node(x, 1);
    ++visited;
    if (x >= ceiling) return 1;
    while (!stack.empty()) {
        Frontier& v = stack.back();
        if (!v.key.has_child(v.next_child)) {
            stack.pop_back();
            continue;
        }
        const NodeKey ck = v.key.child(v.next_child);
        ++v.next_child;
        const std::int64_t label = v.label + ck.increment(jumps);
        const std::int32_t depth = v.depth + 1;
        on_node(label, depth);
        if (++visited > node_cap) throw std::length_error("walk_full_tree: node cap exceeded");
        if (label >= ceiling) {
            ++pruned;
            continue;
        }
        stack.push_back({ck, label, depth, 0, false});
    }
    return pruned;
}

double descendant_drop_bound(const JumpDistribution& jumps, double drop) {
    // sum_m E(Z_m) P(S_m <= -drop) <= exp(-k drop) rho/(1-rho), rho = E exp(-k J) < 1.
    double best = std::numeric_limits<double>::infinity();
    for (double k = 1e-3; k < 20.0; k *= 1.02) {
        const double rho = jumps.laplace(k);
        if (!(rho < 1.0)) continue;
        best = std::min(best, std::exp(-k * drop) * rho / (1.0 - rho));
    }
    return best;
}

TreeExcursion exploration_to_book_path(Level a, NodeKey root, const ModelParams& params, Stream& time_rng,
                                       std::int64_t max_steps, bool record_path) {
    if (a < 0) throw std::invalid_argument("excursion level must be nonnegative");
    LazyExploreOptions opts;
    opts.max_steps = max_steps;
    opts.record_steps = record_path;
    const auto res = explore_lazy(a + 1, root, params.jumps, opts);

    TreeExcursion ex;
    ex.tau = res.steps;
    ex.jump_count = res.steps + 1;
    ex.height = res.psi_star - a;
    ex.deposited_below = res.killed;
    ex.capped = res.step_capped;
    const double rate = 2.0 * params.lambda;
    if (record_path) {
        ex.embedded_path.push_back({EventKind::add, a + 1});
        ex.epochs.push_back(0.0);
        for (const auto& s : res.trace)
            ex.embedded_path.push_back({s.kind == StepKind::green ? EventKind::add : EventKind::remove,
                                        std::max<std::int64_t>(s.label, 0)});
    }
    double t = 0.0;
    for (std::int64_t k = 0; k < res.steps; ++k) {
        t += time_rng.exponential(rate);
        if (record_path) ex.epochs.push_back(t);
    }
    ex.duration = t;
    return ex;
}

std::vector<std::int32_t> contour(const ColoredTree& tree) {
    std::vector<std::int32_t> out;
    if (tree.size() == 0) return out;
    out.reserve(2 * tree.size());
    out.push_back(tree.node(0).depth);
    std::vector<std::pair<NodeId, NodeId>> stack{{0, tree.node(0).first_child}};
    while (!stack.empty()) {
        auto& [v, c] = stack.back();
        if (c != kNoNode) {
            const NodeId child = c;
            c = tree.node(child).next_sibling;
            out.push_back(tree.node(child).depth);
            stack.emplace_back(child, tree.node(child).first_child);
        } else {
            out.push_back(tree.node(v).depth - 1);
            stack.pop_back();
        }
    }
    return out;
}

std::int64_t visits(const std::vector<std::int32_t>& c, std::int32_t m) {
    return std::count(c.begin(), c.end(), m);
}

bool hits(const std::vector<std::int32_t>& c, std::int32_t u) {
    for (std::int32_t v : c) {
        if (v >= u) return true;
        if (v <= 0) return false;
    }
    return false;
}

Forest sample_forest(const OrderBook& initial, Stream& rng) {
    Forest f;
    initial.for_each([&](Level level, std::int64_t count) {
        for (std::int64_t i = 0; i < count; ++i) f.roots.push_back({level, NodeKey{rng()}});
    });
    return f;
}

ForestPath explore_forest(const Forest& forest, const JumpDistribution& jumps, std::int64_t max_steps) {
    ForestPath out;
    GreenFrontier greens(0);
    for (std::size_t i = 0; i < forest.roots.size(); ++i) {
        const auto& r = forest.roots[i];
        greens.add(-1, static_cast<std::uint32_t>(i), r.key, r.label, 1, false);
    }
    std::int64_t steps = 0;
    for (;;) {
        const std::int32_t id = greens.top();
        if (id < 0) break;
        if (max_steps != 0 && steps >= max_steps) {
            out.capped = true;
            break;
        }
        auto& gamma = greens.node(id);
        ++steps;
        if (gamma.key.has_child(gamma.next_child)) {
            const std::uint32_t index = gamma.next_child++;
            const NodeKey ck = gamma.key.child(index);
            const std::int64_t label = std::max<std::int64_t>(gamma.label + ck.increment(jumps), 0);
            out.deltas.push_back({EventKind::add, label});
            greens.add(id, index, ck, label, gamma.depth + 1, false);
        } else {
            out.deltas.push_back({EventKind::remove, gamma.label});
            greens.pop_top();
        }
    }
    return out;
}

BudgetExhausted::BudgetExhausted(std::uint64_t attempts_, std::uint64_t capped_)
    : std::runtime_error("rejection budget exhausted after " + std::to_string(attempts_) + " attempts (" +
                         std::to_string(capped_) + " capped)"),
      attempts(attempts_),
      capped(capped_) {}

namespace {

std::optional<bool> full_tree_reaches_depth(NodeKey root, std::int32_t target, std::int64_t max_nodes) {
    if (target <= 1) return true;
    std::vector<std::pair<NodeKey, std::uint32_t>> stack{{root, 0}};
    std::int64_t visited = 1;
    while (!stack.empty()) {
        auto& [key, next] = stack.back();
        if (!key.has_child(next)) {
            stack.pop_back();
            continue;
        }
        const NodeKey ck = key.child(next);
        ++next;
        if (static_cast<std::int32_t>(stack.size()) + 1 >= target) return true;
        if (max_nodes != 0 && ++visited > max_nodes) return std::nullopt;
        stack.emplace_back(ck, 0);
    }
    return false;
}

}  // namespace

std::optional<bool> meets_condition(Condition condition, std::int64_t u, std::int64_t x, NodeKey root,
                                    const JumpDistribution& jumps, std::int64_t max_steps) {
    switch (condition) {
        case Condition::psi_star: {
            if (x > u) return true;
            LazyExploreOptions opts;
            opts.stop_at_label = u + 1;
            opts.label_ceiling = u + 1;
            opts.max_steps = max_steps;
            const auto res = explore_lazy(x, root, jumps, opts);
            if (res.step_capped) return std::nullopt;
            return res.stopped_early;
        }
        case Condition::tau: {
            if (u < 0) return true;
            LazyExploreOptions opts;
            opts.max_steps = u + 1;
            return explore_lazy(x, root, jumps, opts).steps > u;
        }
        case Condition::height:
            if (u < 1) return true;
            if (u >= std::numeric_limits<std::int32_t>::max()) return false;
            return full_tree_reaches_depth(root, static_cast<std::int32_t>(u + 1), max_steps);
    }
    return false;
}

ConditionedSample sample_conditioned(Condition condition, std::int64_t u, std::int64_t x,
                                     const JumpDistribution& jumps, Stream& rng, std::uint64_t budget,
                                     std::size_t node_cap) {
    ConditionedSample out;
    while (out.attempts < budget) {
        ++out.attempts;
        const NodeKey key{rng()};
        const auto met = meets_condition(condition, u, x, key, jumps, static_cast<std::int64_t>(node_cap));
        if (!met) {
            ++out.capped;
            continue;
        }
        if (!*met) continue;
        auto sampled = sample_tree_from_key(x, key, jumps, node_cap);
        if (std::holds_alternative<Capped>(sampled)) {
            ++out.capped;
            continue;
        }
        out.tree = std::move(std::get<ColoredTree>(sampled));
        return out;
    }
    throw BudgetExhausted(out.attempts, out.capped);
}

}  // namespace lobtree
