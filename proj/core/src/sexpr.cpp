#include "moira/sexpr.hpp"

#include "moira/error.hpp"
#include "utf8.hpp"

namespace moira::sexpr {
namespace {

[[noreturn]] void fail(std::string_view what, std::size_t offset) {
  throw Error(ErrorCode::kParse, std::string(what) + " at offset " + std::to_string(offset));
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_delimiter(char c) { return is_space(c) || c == '(' || c == ')' || c == '"' || c == ';'; }

}  // namespace

std::vector<Node> parse(std::string_view source) {
  if (const auto bad = detail::first_invalid_utf8(source)) fail("invalid UTF-8", *bad);

  std::vector<Node> top;
  std::vector<Node> stack;
  auto emit = [&](Node node) {
    if (stack.empty()) {
      top.push_back(std::move(node));
    } else {
      stack.back().children.push_back(std::move(node));
    }
  };

  std::size_t i = 0;
  const std::size_t n = source.size();
  while (i < n) {
    const char c = source[i];
    if (is_space(c)) {
      ++i;
    } else if (c == ';') {
      while (i < n && source[i] != '\n') ++i;
    } else if (c == '(') {
      Node list;
      list.kind = Node::Kind::kList;
      list.offset = i;
      stack.push_back(std::move(list));
      ++i;
    } else if (c == ')') {
      if (stack.empty()) fail("unbalanced ')'", i);
      Node done = std::move(stack.back());
      stack.pop_back();
      emit(std::move(done));
      ++i;
    } else if (c == '"') {
      Node str;
      str.kind = Node::Kind::kString;
      str.offset = i;
      ++i;
      bool closed = false;
      while (i < n) {
        const char d = source[i];
        if (d == '\\' && i + 1 < n && (source[i + 1] == '"' || source[i + 1] == '\\')) {
          str.text.push_back(source[i + 1]);
          i += 2;
        } else if (d == '"') {
          closed = true;
          ++i;
          break;
        } else {
          str.text.push_back(d);
          ++i;
        }
      }
      if (!closed) fail("unterminated string literal starting", str.offset);
      emit(std::move(str));
    } else {
      Node atom;
      atom.kind = Node::Kind::kAtom;
      atom.offset = i;
      while (i < n && !is_delimiter(source[i])) atom.text.push_back(source[i++]);
      emit(std::move(atom));
    }
  }
  if (!stack.empty()) {
    fail("unbalanced parentheses: " + std::to_string(stack.size()) + " unclosed list(s)", n);
  }
  return top;
}

std::string serialize(const Node& node) {
  switch (node.kind) {
    case Node::Kind::kAtom:
      return node.text;
    case Node::Kind::kString: {
      std::string out = "\"";
      for (const char c : node.text) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
      }
      out.push_back('"');
      return out;
    }
    case Node::Kind::kList: {
      std::string out = "(";
      for (std::size_t k = 0; k < node.children.size(); ++k) {
        if (k > 0) out.push_back(' ');
        out += serialize(node.children[k]);
      }
      out.push_back(')');
      return out;
    }
  }
  return {};
}

std::string serialize(const std::vector<Node>& nodes) {
  std::string out;
  for (const auto& node : nodes) {
    out += serialize(node);
    out.push_back('\n');
  }
  return out;
}

const Node* find_form(const std::vector<Node>& nodes, std::string_view head) {
  for (const auto& node : nodes) {
    if (node.is_form(head)) return &node;
    if (node.kind == Node::Kind::kList) {
      if (const Node* hit = find_form(node.children, head)) return hit;
    }
  }
  return nullptr;
}

}  // namespace moira::sexpr
