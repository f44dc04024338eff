#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "labpolicy/error.hpp"
#include "labpolicy/rules/rules.hpp"

namespace labpolicy::rules {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::last:
      return "LAST";
    case Metric::min:
      return "MIN";
    case Metric::max:
      return "MAX";
    case Metric::delta:
      return "DELTA";
    case Metric::drop:
      return "DROP";
    case Metric::rise:
      return "RISE";
    case Metric::pctdrop:
      return "PCTDROP";
    case Metric::pctrise:
      return "PCTRISE";
    case Metric::sum:
      return "SUM";
    case Metric::event:
      return "EVENT";
    case Metric::newevent:
      return "NEWEVENT";
  }
  return "?";
}

std::string_view to_string(Cmp c) {
  switch (c) {
    case Cmp::lt:
      return "<";
    case Cmp::gt:
      return ">";
    case Cmp::le:
      return "<=";
    case Cmp::ge:
      return ">=";
  }
  return "?";
}

namespace {

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string Clause::text() const {
  std::string s = std::string(to_string(metric)) + "(" + feature_name + ", " + fmt_num(window_hours) + "h";
  if (metric == Metric::newevent) s += ", " + fmt_num(prior_window_hours) + "h";
  s += ")";
  if (cmp) s += " " + std::string(to_string(*cmp)) + " " + fmt_num(threshold);
  return s;
}

namespace {

enum class Tok { ident, string, number, window, colon, lparen, rparen, comma, cmp, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0.0;
  std::size_t line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= src_.size()) return t;
    const char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        t.text += advance();
      t.kind = Tok::ident;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+') {
      std::string num;
      num += advance();
      while (pos_ < src_.size()) {
        const char d = src_[pos_];
        const bool exp_sign = (d == '-' || d == '+') && (num.back() == 'e' || num.back() == 'E');
        if (std::isdigit(static_cast<unsigned char>(d)) || d == '.' || d == 'e' || d == 'E' || exp_sign)
          num += advance();
        else
          break;
      }
      std::size_t used = 0;
      try {
        t.number = std::stod(num, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != num.size()) fail(t, "malformed number '" + num + "'");
      t.text = num;
      t.kind = Tok::number;
      if (pos_ < src_.size() && src_[pos_] == 'h' &&
          (pos_ + 1 >= src_.size() || !std::isalnum(static_cast<unsigned char>(src_[pos_ + 1])))) {
        advance();
        t.kind = Tok::window;
        t.text += 'h';
      }
      return t;
    }
    if (c == '"') {
      advance();
      while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') t.text += advance();
      if (pos_ >= src_.size() || src_[pos_] != '"') fail(t, "unterminated string");
      advance();
      t.kind = Tok::string;
      return t;
    }
    if (c == '<' || c == '>') {
      t.text += advance();
      if (pos_ < src_.size() && src_[pos_] == '=') t.text += advance();
      t.kind = Tok::cmp;
      return t;
    }
    advance();
    t.text = std::string(1, c);
    switch (c) {
      case ':':
        t.kind = Tok::colon;
        return t;
      case '(':
        t.kind = Tok::lparen;
        return t;
      case ')':
        t.kind = Tok::rparen;
        return t;
      case ',':
        t.kind = Tok::comma;
        return t;
      default:
        fail(t, std::string("unexpected character '") + c + "'");
    }
    return t;
  }

  [[noreturn]] static void fail(const Token& at, const std::string& msg) {
    throw ConfigError("rules: line " + std::to_string(at.line) + ", column " + std::to_string(at.col) + ": " + msg);
  }

 private:
  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0, line_ = 1, col_ = 1;
};

std::string_view describe(Tok k) {
  switch (k) {
    case Tok::ident:
      return "identifier";
    case Tok::string:
      return "quoted name";
    case Tok::number:
      return "number";
    case Tok::window:
      return "window like 24h";
    case Tok::colon:
      return "':'";
    case Tok::lparen:
      return "'('";
    case Tok::rparen:
      return "')'";
    case Tok::comma:
      return "','";
    case Tok::cmp:
      return "comparator";
    case Tok::end:
      return "end of input";
  }
  return "token";
}

class Parser {
 public:
  Parser(std::string_view text, const core::FeatureCatalog& catalog) : lex_(text), catalog_(catalog) {
    cur_ = lex_.next();
  }

  RuleSet parse() {
    RuleSet rs;
    std::set<std::string> names;
    while (cur_.kind != Tok::end) {
      const Token start = cur_;
      Rule r = parse_rule();
      if (!names.insert(r.name).second) Lexer::fail(start, "duplicate rule name \"" + r.name + "\"");
      rs.rules.push_back(std::move(r));
    }
    return rs;
  }

 private:
  Token take(Tok kind) {
    if (cur_.kind != kind)
      Lexer::fail(cur_, "expected " + std::string(describe(kind)) + ", found " +
                            (cur_.kind == Tok::end ? std::string("end of input") : "'" + cur_.text + "'"));
    Token t = cur_;
    cur_ = lex_.next();
    return t;
  }

  void keyword(std::string_view kw) {
    if (cur_.kind != Tok::ident || cur_.text != kw)
      Lexer::fail(cur_, "expected " + std::string(kw) + ", found " +
                            (cur_.kind == Tok::end ? std::string("end of input") : "'" + cur_.text + "'"));
    cur_ = lex_.next();
  }

  Rule parse_rule() {
    Rule r;
    r.line = cur_.line;
    keyword("RULE");
    const Token name = take(Tok::string);
    if (name.text.empty()) Lexer::fail(name, "rule name must not be empty");
    r.name = name.text;
    take(Tok::colon);
    keyword("IF");
    r.clauses.push_back(parse_clause());
    while (cur_.kind == Tok::ident && cur_.text == "AND") {
      cur_ = lex_.next();
      r.clauses.push_back(parse_clause());
    }
    keyword("THEN");
    keyword("ORDER");
    for (;;) {
      const Token t = take(Tok::ident);
      const auto idx = catalog_.test_index(t.text);
      if (!idx) Lexer::fail(t, "unknown test '" + t.text + "'");
      r.tests.push_back(*idx);
      if (cur_.kind != Tok::comma) break;
      cur_ = lex_.next();
    }
    return r;
  }

  double window(const Token& t) {
    if (!(t.number > 0)) Lexer::fail(t, "window must be positive");
    if (t.number > static_cast<double>(core::kPrevHours))
      Lexer::fail(t, "window " + t.text + " exceeds the 48h context");
    return t.number;
  }

  Clause parse_clause() {
    static const std::pair<std::string_view, Metric> metrics[] = {
        {"LAST", Metric::last},       {"MIN", Metric::min},         {"MAX", Metric::max},
        {"DELTA", Metric::delta},     {"DROP", Metric::drop},       {"RISE", Metric::rise},
        {"PCTDROP", Metric::pctdrop}, {"PCTRISE", Metric::pctrise}, {"SUM", Metric::sum},
        {"EVENT", Metric::event},     {"NEWEVENT", Metric::newevent}};
    const Token mt = take(Tok::ident);
    Clause c;
    bool found = false;
    for (const auto& [n, m] : metrics)
      if (mt.text == n) {
        c.metric = m;
        found = true;
      }
    if (!found) Lexer::fail(mt, "unknown metric '" + mt.text + "'");
    take(Tok::lparen);
    const Token ft = take(Tok::ident);
    const auto fid = catalog_.feature_id(ft.text);
    if (!fid) Lexer::fail(ft, "unknown feature '" + ft.text + "'");
    c.feature = *fid;
    c.feature_name = ft.text;
    take(Tok::comma);
    const Token wt = take(Tok::window);
    c.window_hours = window(wt);
    if (cur_.kind == Tok::comma) {
      cur_ = lex_.next();
      const Token pt = take(Tok::window);
      if (c.metric != Metric::newevent) Lexer::fail(pt, "only NEWEVENT takes a prior window");
      c.prior_window_hours = window(pt);
      if (c.window_hours + c.prior_window_hours > static_cast<double>(core::kPrevHours))
        Lexer::fail(pt, "recent plus prior window exceeds the 48h context");
    } else if (c.metric == Metric::newevent) {
      c.prior_window_hours = std::min(c.window_hours, static_cast<double>(core::kPrevHours) - c.window_hours);
      if (!(c.prior_window_hours > 0)) Lexer::fail(wt, "NEWEVENT needs room for a prior window");
    }
    take(Tok::rparen);
    if (cur_.kind == Tok::cmp) {
      const Token ct = take(Tok::cmp);
      c.cmp = ct.text == "<" ? Cmp::lt : ct.text == ">" ? Cmp::gt : ct.text == "<=" ? Cmp::le : Cmp::ge;
      c.threshold = take(Tok::number).number;
    } else if (c.metric != Metric::event && c.metric != Metric::newevent) {
      Lexer::fail(cur_, std::string(to_string(c.metric)) + " needs a comparison like '< 7'");
    }
    return c;
  }

  Lexer lex_;
  const core::FeatureCatalog& catalog_;
  Token cur_;
};

}  // namespace

RuleSet parse_rules(std::string_view text, const core::FeatureCatalog& catalog) {
  return Parser(text, catalog).parse();
}

RuleSet load_rules(const std::filesystem::path& path, const core::FeatureCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rules file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rules(ss.str(), catalog);
}

const RuleSet& default_ruleset() {
  static const RuleSet rs = parse_rules(default_rules_text(), core::FeatureCatalog::icu_default());
  return rs;
}

}  // namespace labpolicy::rules
