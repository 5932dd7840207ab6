#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace moira::sexpr {

/// A parsed s-expression: a bare atom, a double-quoted string literal or a
/// parenthesized list.
struct Node {
  enum class Kind { kAtom, kString, kList };

  Kind kind = Kind::kAtom;
  std::string text;             // atom or string contents (unescaped)
  std::vector<Node> children;   // kList only
  std::size_t offset = 0;       // byte offset of the first character

  bool is_atom(std::string_view value) const { return kind == Kind::kAtom && text == value; }
  /// True for a list whose first child is the atom `head`.
  bool is_form(std::string_view head) const {
    return kind == Kind::kList && !children.empty() && children.front().is_atom(head);
  }

  /// Structural equality; offsets are ignored.
  friend bool operator==(const Node& a, const Node& b) {
    return a.kind == b.kind && a.text == b.text && a.children == b.children;
  }
};

/// Parses every top-level expression in `source`. `;` starts a comment that
/// runs to the end of the line. Strings support \" and \\ escapes.
/// Throws Error(kParse) naming the byte offset for unbalanced parentheses,
/// unterminated strings and invalid UTF-8.
std::vector<Node> parse(std::string_view source);

/// Canonical text form; parse(serialize(x)) == x.
std::string serialize(const Node& node);
std::string serialize(const std::vector<Node>& nodes);

/// Depth-first search for the first list whose head atom is `head`.
const Node* find_form(const std::vector<Node>& nodes, std::string_view head);

}  // namespace moira::sexpr
