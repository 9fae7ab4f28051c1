#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rrt_eta/predicate.hpp"

namespace rrt_eta {

enum class NodeKind { True, False, Pred, And, Or, Globally, Finally };

inline bool is_temporal(NodeKind k) {
  return k == NodeKind::Globally || k == NodeKind::Finally;
}
inline bool is_boolean(NodeKind k) {
  return k == NodeKind::And || k == NodeKind::Or;
}

/// Where a predicate sits relative to its innermost temporal operator. Used
/// by the sampler to distinguish goals to reach from constraints to hold.
enum class ActivationContext { instant, reach, hold };

struct ActivePredicate {
  int pred = -1;
  ActivationContext context = ActivationContext::instant;
  auto operator<=>(const ActivePredicate&) const = default;
};

struct FormulaNode {
  NodeKind kind = NodeKind::True;
  int a = 0, b = 0;           // temporal window, in steps
  std::vector<int> children;  // node ids
  int pred = -1;              // index into the formula's predicate table
};

/// Immutable STL formula in positive normal form. Nodes live in a preorder
/// arena so node ids are dense and stable; safe to share across threads.
class Formula {
 public:
  Formula() = default;

  int root() const { return 0; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  bool empty() const { return nodes_.empty(); }

  const FormulaNode& node(int id) const { return nodes_.at(id); }
  NodeKind kind(int id) const { return nodes_.at(id).kind; }

  const std::vector<Predicate>& predicates() const { return preds_; }
  const Predicate& predicate_of(int node_id) const {
    return preds_.at(nodes_.at(node_id).pred);
  }

  /// Map view of the predicate table, e.g. for re-parsing printed formulae.
  std::map<std::string, Predicate> predicate_table() const {
    std::map<std::string, Predicate> t;
    for (const auto& p : preds_) t.emplace(p.id(), p);
    return t;
  }

  /// Steps needed to fully evaluate the subformula rooted at `id`.
  int horizon(int id) const { return horizons_.at(id); }
  int horizon() const { return empty() ? 0 : horizons_[0]; }

  /// Window length in observations: b - a + 1.
  int window_count(int id) const {
    const auto& n = nodes_.at(id);
    return n.b - n.a + 1;
  }

  /// Predicates whose satisfaction at step t (relative to evaluation start)
  /// can affect the formula's robustness. Out-of-range t yields an empty set.
  std::vector<ActivePredicate> active_predicates(int t) const {
    std::set<ActivePredicate> out;
    if (!empty() && t >= 0 && t <= horizon())
      collect_active(root(), t, ActivationContext::instant, out);
    return {out.begin(), out.end()};
  }

  std::string to_string(int id) const {
    std::ostringstream os;
    print(id, 0, os);
    return os.str();
  }
  std::string to_string() const { return to_string(root()); }

  bool structurally_equal(const Formula& other) const {
    return node_count() == other.node_count() && equal_at(other, root(), other.root());
  }

 private:
  friend class FormulaBuilder;

  void collect_active(int id, int t, ActivationContext ctx,
                      std::set<ActivePredicate>& out) const {
    const auto& n = nodes_[id];
    switch (n.kind) {
      case NodeKind::True:
      case NodeKind::False:
        return;
      case NodeKind::Pred:
        if (t == 0) out.insert({n.pred, ctx});
        return;
      case NodeKind::And:
      case NodeKind::Or:
        for (int c : n.children) collect_active(c, t, ctx, out);
        return;
      case NodeKind::Globally:
      case NodeKind::Finally: {
        const auto child_ctx = n.kind == NodeKind::Globally
                                   ? ActivationContext::hold
                                   : ActivationContext::reach;
        const int child = n.children[0];
        for (int tau = n.a; tau <= n.b; ++tau) {
          const int tc = t - tau;
          if (tc >= 0 && tc <= horizons_[child])
            collect_active(child, tc, child_ctx, out);
        }
        return;
      }
    }
  }

  // Precedence: | = 1, & = 2, atoms/temporal = 3.
  void print(int id, int parent_level, std::ostringstream& os) const {
    const auto& n = nodes_[id];
    switch (n.kind) {
      case NodeKind::True:
        os << "true";
        return;
      case NodeKind::False:
        os << "false";
        return;
      case NodeKind::Pred:
        os << preds_[n.pred].id();
        return;
      case NodeKind::Or:
      case NodeKind::And: {
        const int level = n.kind == NodeKind::Or ? 1 : 2;
        const char* sep = n.kind == NodeKind::Or ? " | " : " & ";
        const bool parens = level < parent_level;
        if (parens) os << '(';
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          if (i) os << sep;
          print(n.children[i], level + 1, os);
        }
        if (parens) os << ')';
        return;
      }
      case NodeKind::Globally:
      case NodeKind::Finally:
        os << (n.kind == NodeKind::Globally ? 'G' : 'F') << '[' << n.a << ','
           << n.b << "](";
        print(n.children[0], 0, os);
        os << ')';
        return;
    }
  }

  bool equal_at(const Formula& o, int a_id, int b_id) const {
    const auto& x = nodes_[a_id];
    const auto& y = o.nodes_[b_id];
    if (x.kind != y.kind || x.a != y.a || x.b != y.b ||
        x.children.size() != y.children.size())
      return false;
    if (x.kind == NodeKind::Pred &&
        preds_[x.pred].id() != o.preds_[y.pred].id())
      return false;
    for (std::size_t i = 0; i < x.children.size(); ++i)
      if (!equal_at(o, x.children[i], y.children[i])) return false;
    return true;
  }

  std::vector<FormulaNode> nodes_;
  std::vector<Predicate> preds_;
  std::vector<int> horizons_;
};

/// Assembles formulas bottom-up; finish() renumbers nodes in preorder and
/// checks structural invariants.
class FormulaBuilder {
 public:
  int add_true() { return add({NodeKind::True, 0, 0, {}, -1}); }
  int add_false() { return add({NodeKind::False, 0, 0, {}, -1}); }

  int add_predicate(const Predicate& p) {
    int idx = -1;
    for (std::size_t i = 0; i < preds_.size(); ++i)
      if (preds_[i].id() == p.id()) {
        idx = static_cast<int>(i);
        break;
      }
    if (idx < 0) {
      idx = static_cast<int>(preds_.size());
      preds_.push_back(p);
    }
    return add({NodeKind::Pred, 0, 0, {}, idx});
  }

  int add_and(std::vector<int> children) {
    if (children.size() < 2) throw std::invalid_argument("and: needs >= 2 children");
    return add({NodeKind::And, 0, 0, std::move(children), -1});
  }
  int add_or(std::vector<int> children) {
    if (children.size() < 2) throw std::invalid_argument("or: needs >= 2 children");
    return add({NodeKind::Or, 0, 0, std::move(children), -1});
  }

  // The grammar requires a < b; programmatic construction also accepts the
  // degenerate one-observation window a == b.
  int add_globally(int a, int b, int child) { return add_temporal(NodeKind::Globally, a, b, child); }
  int add_finally(int a, int b, int child) { return add_temporal(NodeKind::Finally, a, b, child); }

  const std::vector<Predicate>& predicates() const { return preds_; }

  Formula finish(int root_id) {
    if (root_id < 0 || root_id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("finish: bad root");
    Formula f;
    f.preds_ = preds_;
    f.nodes_.reserve(nodes_.size());
    std::vector<bool> visited(nodes_.size(), false);
    renumber(root_id, visited, f.nodes_);
    f.horizons_.assign(f.nodes_.size(), 0);
    compute_horizons(f, 0);
    return f;
  }

 private:
  int add_temporal(NodeKind k, int a, int b, int child) {
    if (a < 0 || b < a) throw std::invalid_argument("temporal: need 0 <= a <= b");
    if (child < 0 || child >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("temporal: bad child");
    return add({k, a, b, {child}, -1});
  }

  int add(FormulaNode n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int renumber(int old_id, std::vector<bool>& visited,
               std::vector<FormulaNode>& out) const {
    if (visited[old_id])
      throw std::invalid_argument("finish: node used more than once");
    visited[old_id] = true;
    const int new_id = static_cast<int>(out.size());
    out.push_back(nodes_[old_id]);
    out[new_id].children.clear();
    for (int c : nodes_[old_id].children)
      out[new_id].children.push_back(renumber(c, visited, out));
    return new_id;
  }

  static int compute_horizons(Formula& f, int id) {
    const auto& n = f.nodes_[id];
    int h = 0;
    switch (n.kind) {
      case NodeKind::True:
      case NodeKind::False:
      case NodeKind::Pred:
        h = 0;
        break;
      case NodeKind::And:
      case NodeKind::Or:
        for (int c : n.children) h = std::max(h, compute_horizons(f, c));
        break;
      case NodeKind::Globally:
      case NodeKind::Finally:
        h = n.b + compute_horizons(f, n.children[0]);
        break;
    }
    f.horizons_[id] = h;
    return h;
  }

  std::vector<FormulaNode> nodes_;
  std::vector<Predicate> preds_;
};

}  // namespace rrt_eta
