#include "t4d/toml_lite.hpp"

#include <cctype>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "t4d/error.hpp"

namespace t4d {
namespace {

using nlohmann::json;

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

void encode_utf8(std::uint32_t cp, std::string& out) {
  if (cp <= 0x7f) {
    out.push_back(static_cast<char>(cp));
  } else if (cp <= 0x7ff) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp <= 0xffff) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

class Parser {
 public:
  explicit Parser(const std::string& text) : src_(text) {}

  json run() {
    root_ = json::object();
    active_path_.clear();
    while (true) {
      skip_blank();
      if (eof()) break;
      if (peek() == '[') {
        parse_header();
      } else {
        parse_key_value(active());
      }
      expect_line_end();
    }
    return std::move(root_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("toml.syntax", "line " + std::to_string(line_) + ": " + msg);
  }

  bool eof() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  char get() {
    char c = src_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  // Spaces and tabs only.
  void skip_inline_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  // Whitespace, newlines, and comments between statements.
  void skip_blank() {
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else if (c == '#') {
        while (!eof() && peek() != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  // After a statement only trailing whitespace or a comment may remain.
  void expect_line_end() {
    skip_inline_ws();
    if (eof()) return;
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
      return;
    }
    if (peek() == '\r') {
      get();
      if (eof() || peek() != '\n') fail("stray carriage return");
      return;
    }
    if (peek() != '\n') fail("unexpected trailing content");
  }

  std::string parse_key_part() {
    if (eof()) fail("expected key");
    char c = peek();
    if (c == '"') return parse_basic_string();
    if (c == '\'') return parse_literal_string();
    if (!is_bare_key_char(c)) fail("expected key");
    std::string key;
    while (!eof() && is_bare_key_char(peek())) key.push_back(get());
    return key;
  }

  std::vector<std::string> parse_dotted_key() {
    std::vector<std::string> parts;
    parts.push_back(parse_key_part());
    skip_inline_ws();
    while (!eof() && peek() == '.') {
      get();
      skip_inline_ws();
      parts.push_back(parse_key_part());
      skip_inline_ws();
    }
    return parts;
  }

  std::string parse_basic_string() {
    get();  // opening quote
    std::string out;
    while (true) {
      if (eof()) fail("unterminated string");
      char c = get();
      if (c == '"') break;
      if (c == '\n') fail("newline in string");
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (eof()) fail("unterminated escape");
      char e = get();
      switch (e) {
        case 'b': out.push_back('\b'); break;
        case 't': out.push_back('\t'); break;
        case 'n': out.push_back('\n'); break;
        case 'f': out.push_back('\f'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'u': encode_utf8(parse_hex(4), out); break;
        case 'U': encode_utf8(parse_hex(8), out); break;
        default: fail("unknown escape \\" + std::string(1, e));
      }
    }
    return out;
  }

  std::uint32_t parse_hex(int digits) {
    std::uint32_t v = 0;
    for (int i = 0; i < digits; ++i) {
      if (eof()) fail("unterminated escape");
      char c = get();
      v <<= 4;
      if (c >= '0' && c <= '9') v |= static_cast<std::uint32_t>(c - '0');
      else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint32_t>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint32_t>(c - 'A' + 10);
      else fail("bad hex digit in escape");
    }
    return v;
  }

  std::string parse_literal_string() {
    get();  // opening quote
    std::string out;
    while (true) {
      if (eof()) fail("unterminated string");
      char c = get();
      if (c == '\'') break;
      if (c == '\n') fail("newline in string");
      out.push_back(c);
    }
    return out;
  }

  json parse_value() {
    if (eof()) fail("expected value");
    char c = peek();
    if (c == '"') return parse_basic_string();
    if (c == '\'') return parse_literal_string();
    if (c == '[') return parse_array();
    return parse_scalar();
  }

  json parse_array() {
    get();  // '['
    json arr = json::array();
    while (true) {
      skip_blank();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        get();
        return arr;
      }
      arr.push_back(parse_value());
      skip_blank();
      if (eof()) fail("unterminated array");
      if (peek() == ',') {
        get();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  json parse_scalar() {
    std::string tok;
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ',' ||
          c == ']' || c == '#') {
        break;
      }
      tok.push_back(get());
    }
    if (tok.empty()) fail("expected value");
    if (tok == "true") return true;
    if (tok == "false") return false;

    std::string digits;
    for (char c : tok) {
      if (c != '_') digits.push_back(c);
    }
    std::string body = digits;
    bool negative = false;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
      negative = body[0] == '-';
      body = body.substr(1);
    }
    if (body == "inf") {
      return negative ? -std::numeric_limits<double>::infinity()
                      : std::numeric_limits<double>::infinity();
    }
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();

    try {
      std::size_t used = 0;
      if (body.size() > 2 && body[0] == '0' &&
          (body[1] == 'x' || body[1] == 'X')) {
        long long v = std::stoll(body.substr(2), &used, 16);
        if (used != body.size() - 2) fail("bad number '" + tok + "'");
        return negative ? -v : v;
      }
      if (digits.find('.') != std::string::npos ||
          digits.find('e') != std::string::npos ||
          digits.find('E') != std::string::npos) {
        double v = std::stod(digits, &used);
        if (used != digits.size()) fail("bad number '" + tok + "'");
        return v;
      }
      long long v = std::stoll(digits, &used, 10);
      if (used != digits.size()) fail("bad number '" + tok + "'");
      return v;
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail("bad value '" + tok + "'");
    }
  }

  // Resolves the table the active [header] names, creating objects on the way.
  json* active() {
    json* node = &root_;
    for (const auto& part : active_path_) {
      if (node->is_array()) {
        if (node->empty()) fail("internal: empty table array");
        node = &node->back();
      }
      auto it = node->find(part);
      if (it == node->end()) fail("internal: lost table '" + part + "'");
      node = &*it;
    }
    if (node->is_array()) node = &node->back();
    return node;
  }

  void parse_header() {
    get();  // '['
    bool array_of_tables = !eof() && peek() == '[';
    if (array_of_tables) get();
    skip_inline_ws();
    std::vector<std::string> parts = parse_dotted_key();
    if (eof() || get() != ']') fail("expected ']' after table name");
    if (array_of_tables && (eof() || get() != ']')) {
      fail("expected ']]' after table array name");
    }

    json* node = &root_;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (node->is_array()) node = &node->back();
      auto it = node->find(parts[i]);
      if (it == node->end()) {
        (*node)[parts[i]] = json::object();
        it = node->find(parts[i]);
      }
      node = &*it;
      if (!node->is_object() && !node->is_array()) {
        fail("'" + parts[i] + "' is not a table");
      }
    }
    if (node->is_array()) node = &node->back();
    const std::string& leaf = parts.back();

    std::string flat;
    for (const auto& p : parts) {
      flat += p;
      flat.push_back('\x1f');
    }

    if (array_of_tables) {
      auto it = node->find(leaf);
      if (it == node->end()) {
        (*node)[leaf] = json::array();
        it = node->find(leaf);
      } else if (!it->is_array()) {
        fail("'" + leaf + "' is already a non-array value");
      }
      it->push_back(json::object());
    } else {
      if (!defined_tables_.insert(flat).second) {
        fail("table '" + leaf + "' defined twice");
      }
      auto it = node->find(leaf);
      if (it == node->end()) {
        (*node)[leaf] = json::object();
      } else if (!it->is_object()) {
        fail("'" + leaf + "' is already a non-table value");
      }
    }
    active_path_ = std::move(parts);
  }

  void parse_key_value(json* table) {
    std::vector<std::string> parts = parse_dotted_key();
    if (eof() || peek() != '=') fail("expected '=' after key");
    get();
    skip_inline_ws();
    json value = parse_value();

    json* node = table;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      auto it = node->find(parts[i]);
      if (it == node->end()) {
        (*node)[parts[i]] = json::object();
        it = node->find(parts[i]);
      }
      node = &*it;
      if (!node->is_object()) fail("'" + parts[i] + "' is not a table");
    }
    if (node->contains(parts.back())) {
      fail("duplicate key '" + parts.back() + "'");
    }
    (*node)[parts.back()] = std::move(value);
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  json root_;
  std::vector<std::string> active_path_;
  std::unordered_set<std::string> defined_tables_;
};

}  // namespace

json parse_toml(const std::string& text) { return Parser(text).run(); }

}  // namespace t4d
