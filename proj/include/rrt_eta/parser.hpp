#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rrt_eta/formula.hpp"

namespace rrt_eta {

class syntax_error : public std::runtime_error {
 public:
  syntax_error(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " (at position " + std::to_string(pos) + ")"),
        pos_(pos) {}
  std::size_t position() const { return pos_; }

 private:
  std::size_t pos_;
};

/// Parses the textual formula grammar:
///
///   formula := and_or chains of predicates, `!`, `&`, `|` (precedence
///              ! > & > |), G[a,b](...), F[a,b](...), parentheses.
///
/// Temporal bounds are seconds (integer or decimal) and are converted to
/// steps with the supplied dt. Negation is eliminated during parsing: `!` on
/// a predicate flips its measure and threshold, `!` on compound operators is
/// pushed down by De Morgan duality, so the result is in positive normal
/// form.
class FormulaParser {
 public:
  FormulaParser(std::string text, const std::map<std::string, Predicate>& table,
                double dt)
      : text_(std::move(text)), table_(table), dt_(dt) {
    if (!(dt_ > 0.0)) throw std::invalid_argument("parse: dt must be > 0");
  }

  Formula parse() {
    auto root = parse_or();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    FormulaBuilder builder;
    const int root_id = to_pnf(*root, false, builder);
    return builder.finish(root_id);
  }

 private:
  struct PNode {
    enum Kind { True, False, Pred, Not, And, Or, G, F } kind;
    int a = 0, b = 0;
    std::vector<std::unique_ptr<PNode>> children;
    std::string pred_id;
    std::size_t pos = 0;
  };
  using PNodePtr = std::unique_ptr<PNode>;

  // --- scanning ---------------------------------------------------------

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw syntax_error(msg, pos_);
  }

  std::string read_ident() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ < text_.size() &&
        (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
    }
    if (pos_ == start) fail("expected identifier");
    return text_.substr(start, pos_ - start);
  }

  double read_number() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == '-' || text_[pos_] == '+'))
      ++pos_;
    if (pos_ == start) fail("expected number");
    try {
      std::size_t used = 0;
      const std::string tok = text_.substr(start, pos_ - start);
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw syntax_error("malformed number", start);
    }
  }

  int bound_to_steps(double seconds, std::size_t pos) const {
    const double steps = seconds / dt_;
    const long long rounded = std::llround(steps);
    if (std::abs(seconds - static_cast<double>(rounded) * dt_) > 1e-9 + 1e-6 * dt_)
      throw syntax_error("temporal bound is not a multiple of dt", pos);
    if (rounded < 0) throw syntax_error("temporal bound must be nonnegative", pos);
    return static_cast<int>(rounded);
  }

  // --- grammar ----------------------------------------------------------

  PNodePtr parse_or() {
    auto first = parse_and();
    std::vector<PNodePtr> parts;
    parts.push_back(std::move(first));
    while (eat('|')) parts.push_back(parse_and());
    return fold(PNode::Or, std::move(parts));
  }

  PNodePtr parse_and() {
    auto first = parse_unary();
    std::vector<PNodePtr> parts;
    parts.push_back(std::move(first));
    while (eat('&')) parts.push_back(parse_unary());
    return fold(PNode::And, std::move(parts));
  }

  static PNodePtr fold(PNode::Kind kind, std::vector<PNodePtr> parts) {
    if (parts.size() == 1) return std::move(parts[0]);
    auto n = std::make_unique<PNode>();
    n->kind = kind;
    n->children = std::move(parts);
    return n;
  }

  PNodePtr parse_unary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const std::size_t here = pos_;
    const char c = text_[pos_];

    if (c == '!') {
      ++pos_;
      auto n = std::make_unique<PNode>();
      n->kind = PNode::Not;
      n->pos = here;
      n->children.push_back(parse_unary());
      return n;
    }
    if (c == '(') {
      ++pos_;
      auto inner = parse_or();
      expect(')');
      return inner;
    }
    if ((c == 'G' || c == 'F') && pos_ + 1 < text_.size() && peek_after(pos_ + 1) == '[')
      return parse_temporal();

    const std::string id = read_ident();
    if (id == "true" || id == "false") {
      auto n = std::make_unique<PNode>();
      n->kind = id == "true" ? PNode::True : PNode::False;
      n->pos = here;
      return n;
    }
    if (!table_.count(id))
      throw syntax_error("unknown predicate '" + id + "'", here);
    auto n = std::make_unique<PNode>();
    n->kind = PNode::Pred;
    n->pred_id = id;
    n->pos = here;
    return n;
  }

  char peek_after(std::size_t i) const {
    while (i < text_.size() && std::isspace(static_cast<unsigned char>(text_[i]))) ++i;
    return i < text_.size() ? text_[i] : '\0';
  }

  PNodePtr parse_temporal() {
    const std::size_t here = pos_;
    const char op = text_[pos_++];
    expect('[');
    const std::size_t a_pos = pos_;
    const double a_sec = read_number();
    expect(',');
    const std::size_t b_pos = pos_;
    const double b_sec = read_number();
    expect(']');
    const int a = bound_to_steps(a_sec, a_pos);
    const int b = bound_to_steps(b_sec, b_pos);
    if (a >= b) throw syntax_error("temporal interval needs a < b", here);
    expect('(');
    auto child = parse_or();
    expect(')');
    auto n = std::make_unique<PNode>();
    n->kind = op == 'G' ? PNode::G : PNode::F;
    n->a = a;
    n->b = b;
    n->pos = here;
    n->children.push_back(std::move(child));
    return n;
  }

  // --- positive normal form --------------------------------------------

  int to_pnf(const PNode& n, bool negate, FormulaBuilder& builder) {
    switch (n.kind) {
      case PNode::True:
        return negate ? builder.add_false() : builder.add_true();
      case PNode::False:
        return negate ? builder.add_true() : builder.add_false();
      case PNode::Not:
        return to_pnf(*n.children[0], !negate, builder);
      case PNode::Pred: {
        const Predicate& base = table_.at(n.pred_id);
        if (!negate) return builder.add_predicate(base);
        return builder.add_predicate(negated_predicate(base));
      }
      case PNode::And:
      case PNode::Or: {
        std::vector<int> kids;
        kids.reserve(n.children.size());
        for (const auto& c : n.children) kids.push_back(to_pnf(*c, negate, builder));
        const bool as_and = (n.kind == PNode::And) != negate;
        return as_and ? builder.add_and(std::move(kids))
                      : builder.add_or(std::move(kids));
      }
      case PNode::G:
      case PNode::F: {
        const int child = to_pnf(*n.children[0], negate, builder);
        const bool as_g = (n.kind == PNode::G) != negate;
        return as_g ? builder.add_globally(n.a, n.b, child)
                    : builder.add_finally(n.a, n.b, child);
      }
    }
    throw std::logic_error("unreachable");
  }

  const Predicate& negated_predicate(const Predicate& base) {
    auto it = derived_.find(base.id());
    if (it != derived_.end()) return it->second;
    std::string name = "not_" + base.id();
    while (table_.count(name)) name += '_';
    return derived_.emplace(base.id(), base.negated(name)).first->second;
  }

  std::string text_;
  const std::map<std::string, Predicate>& table_;
  double dt_;
  std::size_t pos_ = 0;
  std::map<std::string, Predicate> derived_;  // source id -> negated predicate
};

inline Formula parse_formula(const std::string& text,
                             const std::map<std::string, Predicate>& predicate_table,
                             double dt = 1.0) {
  return FormulaParser(text, predicate_table, dt).parse();
}

}  // namespace rrt_eta
