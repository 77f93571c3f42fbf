#include "chainscan/signature.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <set>

namespace chainscan::sig {

const char* to_string(rule_error_kind kind) {
    switch (kind) {
        case rule_error_kind::syntax_error: return "syntax_error";
        case rule_error_kind::undeclared_identifier: return "undeclared_identifier";
        case rule_error_kind::duplicate_rule_name: return "duplicate_rule_name";
        case rule_error_kind::unsupported_construct: return "unsupported_construct";
    }
    return "unknown";
}

namespace {

std::string format_error(const std::string& origin, std::size_t line, std::size_t column, const std::string& msg) {
    std::string where = origin.empty() ? std::string("<rules>") : origin;
    return where + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg;
}

}  // namespace

rule_error::rule_error(rule_error_kind kind, const std::string& message, std::size_t line, std::size_t column,
                       std::string origin)
    : std::runtime_error(format_error(origin, line, column, message)),
      kind_(kind),
      message_(message),
      line_(line),
      column_(column),
      origin_(std::move(origin)) {}

bool condition::uses_filesize() const {
    if (k == kind::filesize_compare) return true;
    return std::any_of(children.begin(), children.end(), [](const condition_ptr& c) { return c->uses_filesize(); });
}

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

const std::set<std::string, std::less<>> condition_keywords = {
    "and", "or", "not", "any", "all", "of", "them", "filesize", "true", "false"};

class rule_parser {
public:
    rule_parser(std::string_view src, std::string origin) : src_(src), origin_(std::move(origin)) {}

    rule_set parse_file() {
        rule_set out;
        std::set<std::string, std::less<>> names;
        while (true) {
            skip_ws();
            if (at_end()) break;
            const std::size_t start = pos_;
            std::string word = identifier_or_fail("expected 'rule'");
            if (word == "import" || word == "include") unsupported(start, "'" + word + "' statements are not supported");
            if (word == "private" || word == "global") unsupported(start, "'" + word + "' rules are not supported");
            if (word != "rule") syntax(start, "expected 'rule', found '" + word + "'");
            rule r = parse_rule(start);
            if (!names.insert(r.name).second) {
                fail(rule_error_kind::duplicate_rule_name, start, "duplicate rule name '" + r.name + "'");
            }
            out.rules.push_back(std::move(r));
        }
        return out;
    }

private:
    [[noreturn]] void fail(rule_error_kind kind, std::size_t at, const std::string& msg) const {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < at && i < src_.size(); ++i) {
            if (src_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw rule_error(kind, msg, line, col, origin_);
    }
    [[noreturn]] void syntax(std::size_t at, const std::string& msg) const { fail(rule_error_kind::syntax_error, at, msg); }
    [[noreturn]] void unsupported(std::size_t at, const std::string& msg) const {
        fail(rule_error_kind::unsupported_construct, at, msg);
    }

    bool at_end() const { return pos_ >= src_.size(); }
    char peek(std::size_t ahead = 0) const { return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0'; }

    void skip_ws() {
        while (!at_end()) {
            char c = peek();
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '/' && peek(1) == '/') {
                while (!at_end() && peek() != '\n') ++pos_;
            } else if (c == '/' && peek(1) == '*') {
                std::size_t start = pos_;
                pos_ += 2;
                while (!at_end() && !(peek() == '*' && peek(1) == '/')) ++pos_;
                if (at_end()) syntax(start, "unterminated comment");
                pos_ += 2;
            } else {
                break;
            }
        }
    }

    std::string peek_identifier() const {
        std::size_t p = pos_;
        if (p >= src_.size() || !is_ident_start(src_[p])) return {};
        while (p < src_.size() && is_ident_char(src_[p])) ++p;
        return std::string(src_.substr(pos_, p - pos_));
    }

    std::string identifier_or_fail(const std::string& what) {
        std::string id = peek_identifier();
        if (id.empty()) syntax(pos_, what);
        pos_ += id.size();
        return id;
    }

    void expect(char c, const std::string& what) {
        skip_ws();
        if (peek() != c) syntax(pos_, "expected " + what);
        ++pos_;
    }

    // True when the upcoming tokens are `word :`.
    bool section_header_ahead(std::string_view word) {
        skip_ws();
        std::size_t save = pos_;
        if (peek_identifier() != word) return false;
        pos_ += word.size();
        skip_ws();
        bool ok = peek() == ':';
        pos_ = save;
        return ok;
    }

    void consume_section_header(std::string_view word) {
        skip_ws();
        pos_ += word.size();
        expect(':', "':'");
    }

    rule parse_rule(std::size_t rule_start) {
        rule r;
        r.origin = origin_;
        skip_ws();
        const std::size_t name_pos = pos_;
        r.name = identifier_or_fail("expected rule name");
        if (condition_keywords.count(r.name) || r.name == "rule") syntax(name_pos, "reserved word used as rule name");
        {
            std::size_t line = 1;
            for (std::size_t i = 0; i < rule_start; ++i) line += src_[i] == '\n';
            r.line = line;
        }
        skip_ws();
        if (peek() == ':') {
            ++pos_;
            while (true) {
                skip_ws();
                std::string tag = peek_identifier();
                if (tag.empty()) break;
                pos_ += tag.size();
                r.tags.push_back(tag);
            }
        }
        expect('{', "'{'");

        if (section_header_ahead("meta")) {
            consume_section_header("meta");
            parse_meta(r);
        }
        std::set<std::string, std::less<>> declared;
        if (section_header_ahead("strings")) {
            consume_section_header("strings");
            parse_strings(r, declared);
        }
        if (!section_header_ahead("condition")) syntax(pos_, "expected 'condition:' section");
        consume_section_header("condition");
        declared_ = &declared;
        r.cond = parse_or();
        declared_ = nullptr;
        skip_ws();
        if (peek() != '}') {
            std::size_t at = pos_;
            std::string word = peek_identifier();
            if (!word.empty() && !condition_keywords.count(word)) unsupported(at, "unsupported condition keyword '" + word + "'");
            syntax(at, "expected '}' after condition");
        }
        ++pos_;
        return r;
    }

    void parse_meta(rule& r) {
        while (true) {
            if (section_header_ahead("strings") || section_header_ahead("condition")) return;
            skip_ws();
            std::string key = identifier_or_fail("expected meta identifier");
            expect('=', "'=' in meta entry");
            skip_ws();
            std::string value;
            if (peek() == '"') {
                auto text = parse_text_literal();
                value.assign(text.begin(), text.end());
            } else if (peek() == '-' || std::isdigit(static_cast<unsigned char>(peek()))) {
                std::size_t start = pos_;
                if (peek() == '-') ++pos_;
                while (is_ident_char(peek())) ++pos_;
                value = std::string(src_.substr(start, pos_ - start));
            } else {
                std::string word = peek_identifier();
                if (word != "true" && word != "false") syntax(pos_, "bad meta value");
                pos_ += word.size();
                value = word;
            }
            r.meta.emplace_back(std::move(key), std::move(value));
        }
    }

    byte_vector parse_text_literal() {
        const std::size_t start = pos_;
        ++pos_;  // opening quote
        byte_vector out;
        while (true) {
            if (at_end() || peek() == '\n') syntax(start, "unterminated string");
            char c = src_[pos_++];
            if (c == '"') break;
            if (c != '\\') {
                out.push_back(static_cast<std::uint8_t>(c));
                continue;
            }
            if (at_end()) syntax(start, "unterminated string");
            char e = src_[pos_++];
            switch (e) {
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                case 't': out.push_back('\t'); break;
                case 'x': {
                    int hi = hex_digit(peek());
                    int lo = hex_digit(peek(1));
                    if (hi < 0 || lo < 0) syntax(pos_, "bad \\x escape");
                    pos_ += 2;
                    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
                    break;
                }
                default: syntax(pos_ - 2, std::string("unknown escape \\") + e);
            }
        }
        return out;
    }

    void parse_hex(string_pattern& p) {
        const std::size_t start = pos_;
        ++pos_;  // '{'
        std::vector<int> nibbles;  // -1 for '?'
        while (true) {
            skip_ws();
            if (at_end()) syntax(start, "unterminated hex string");
            char c = peek();
            if (c == '}') {
                ++pos_;
                break;
            }
            if (c == '[') unsupported(pos_, "hex jumps are not supported");
            if (c == '(' || c == '|') unsupported(pos_, "hex alternatives are not supported");
            if (c == '~') unsupported(pos_, "hex negation is not supported");
            if (c == '?') nibbles.push_back(-1);
            else if (hex_digit(c) >= 0) nibbles.push_back(hex_digit(c));
            else syntax(pos_, std::string("bad character in hex string: '") + c + "'");
            ++pos_;
        }
        if (nibbles.empty() || nibbles.size() % 2 != 0) syntax(start, "hex string needs an even, non-zero nibble count");
        bool fixed = false;
        for (std::size_t i = 0; i < nibbles.size(); i += 2) {
            int hi = nibbles[i], lo = nibbles[i + 1];
            std::uint8_t mask = static_cast<std::uint8_t>((hi >= 0 ? 0xF0 : 0) | (lo >= 0 ? 0x0F : 0));
            std::uint8_t value = static_cast<std::uint8_t>(((hi >= 0 ? hi : 0) << 4) | (lo >= 0 ? lo : 0));
            fixed = fixed || mask != 0;
            p.bytes.push_back(value);
            p.mask.push_back(mask);
        }
        if (!fixed) syntax(start, "hex string has no fixed nibble");
    }

    std::pair<std::string, regex_flags> parse_regex_literal() {
        const std::size_t start = pos_;
        ++pos_;  // '/'
        std::string body;
        while (true) {
            if (at_end() || peek() == '\n') syntax(start, "unterminated regular expression");
            char c = src_[pos_++];
            if (c == '/') break;
            if (c == '\\' && peek() == '/') {
                body.push_back('/');
                ++pos_;
                continue;
            }
            body.push_back(c);
            if (c == '\\' && !at_end()) body.push_back(src_[pos_++]);
        }
        if (body.empty()) syntax(start, "empty regular expression");
        regex_flags flags;
        while (peek() == 'i' || peek() == 's') {
            if (peek() == 'i') flags.nocase = true;
            else flags.dot_all = true;
            ++pos_;
        }
        if (is_ident_char(peek())) syntax(pos_, "unknown regular expression flag");
        regex_pos_ = start + 1;
        return {body, flags};
    }

    void parse_strings(rule& r, std::set<std::string, std::less<>>& declared) {
        while (true) {
            skip_ws();
            if (peek() != '$') return;
            const std::size_t id_pos = pos_;
            ++pos_;
            std::string name = "$";
            while (is_ident_char(peek())) name.push_back(src_[pos_++]);
            if (name == "$") unsupported(id_pos, "anonymous strings are not supported");
            if (!declared.insert(name).second) syntax(id_pos, "duplicate string identifier " + name);

            string_pattern p;
            p.identifier = name;
            expect('=', "'=' after string identifier");
            skip_ws();
            std::pair<std::string, regex_flags> regex_parts;
            std::size_t regex_at = 0;
            if (peek() == '"') {
                p.kind = pattern_kind::text;
                p.bytes = parse_text_literal();
                if (p.bytes.empty()) syntax(id_pos, "empty text string");
            } else if (peek() == '{') {
                p.kind = pattern_kind::hex;
                parse_hex(p);
            } else if (peek() == '/') {
                p.kind = pattern_kind::regex;
                regex_parts = parse_regex_literal();
                regex_at = regex_pos_;
                p.regex_source = regex_parts.first;
            } else {
                syntax(pos_, "expected text, hex or regex string");
            }

            bool explicit_ascii = false;
            while (true) {
                const std::size_t save = pos_;
                skip_ws();
                std::string mod = peek_identifier();
                if (mod == "nocase" || mod == "ascii" || mod == "wide") {
                    if (p.kind == pattern_kind::hex) syntax(pos_, "modifier '" + mod + "' not allowed on hex strings");
                    if (mod == "wide" && p.kind == pattern_kind::regex) unsupported(pos_, "wide regular expressions are not supported");
                    if (mod == "nocase") p.nocase = true;
                    if (mod == "ascii") explicit_ascii = true;
                    if (mod == "wide") p.wide = true;
                    pos_ += mod.size();
                } else if (mod == "fullword" || mod == "private" || mod == "xor" || mod == "base64" || mod == "base64wide") {
                    unsupported(pos_, "string modifier '" + mod + "' is not supported");
                } else {
                    pos_ = save;
                    break;
                }
            }
            p.ascii = !p.wide || explicit_ascii;
            if (p.kind == pattern_kind::regex) {
                auto flags = regex_parts.second;
                flags.nocase = flags.nocase || p.nocase;
                try {
                    p.regex = std::make_shared<const byte_regex>(p.regex_source, flags);
                } catch (const regex_error& e) {
                    std::string msg = e.what();
                    if (msg.find("not supported") != std::string::npos) unsupported(regex_at + e.position(), msg);
                    syntax(regex_at + e.position(), msg);
                }
            }
            r.strings.push_back(std::move(p));
        }
    }

    // condition grammar
    condition_ptr make(condition c) { return std::make_shared<const condition>(std::move(c)); }

    condition_ptr parse_or() {
        condition_ptr lhs = parse_and();
        while (true) {
            skip_ws();
            if (peek_identifier() != "or") return lhs;
            pos_ += 2;
            condition c;
            c.k = condition::kind::logical_or;
            c.children = {lhs, parse_and()};
            lhs = make(std::move(c));
        }
    }

    condition_ptr parse_and() {
        condition_ptr lhs = parse_not();
        while (true) {
            skip_ws();
            if (peek_identifier() != "and") return lhs;
            pos_ += 3;
            condition c;
            c.k = condition::kind::logical_and;
            c.children = {lhs, parse_not()};
            lhs = make(std::move(c));
        }
    }

    condition_ptr parse_not() {
        skip_ws();
        if (peek_identifier() == "not") {
            pos_ += 3;
            condition c;
            c.k = condition::kind::logical_not;
            c.children = {parse_not()};
            return make(std::move(c));
        }
        return parse_primary();
    }

    std::uint64_t parse_number() {
        skip_ws();
        const std::size_t start = pos_;
        std::uint64_t v = 0;
        if (peek() == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
            pos_ += 2;
            if (hex_digit(peek()) < 0) syntax(start, "bad hex number");
            while (hex_digit(peek()) >= 0) v = v * 16 + static_cast<std::uint64_t>(hex_digit(src_[pos_++]));
        } else if (std::isdigit(static_cast<unsigned char>(peek()))) {
            while (std::isdigit(static_cast<unsigned char>(peek()))) v = v * 10 + static_cast<std::uint64_t>(src_[pos_++] - '0');
        } else {
            syntax(start, "expected number");
        }
        if (peek() == 'K' && peek(1) == 'B') {
            v *= 1024;
            pos_ += 2;
        } else if (peek() == 'M' && peek(1) == 'B') {
            v *= 1024 * 1024;
            pos_ += 2;
        }
        if (is_ident_char(peek())) syntax(pos_, "bad number suffix");
        return v;
    }

    condition_ptr parse_primary() {
        skip_ws();
        const std::size_t at = pos_;
        char c = peek();
        if (at_end()) syntax(at, "unexpected end of condition");
        if (c == '(') {
            ++pos_;
            condition_ptr inner = parse_or();
            expect(')', "')'");
            return inner;
        }
        if (c == '$') {
            ++pos_;
            std::string name = "$";
            while (is_ident_char(peek())) name.push_back(src_[pos_++]);
            if (peek() == '*') unsupported(at, "string wildcards are not supported");
            if (name == "$") unsupported(at, "anonymous string references are not supported");
            if (!declared_->count(name)) fail(rule_error_kind::undeclared_identifier, at, "undeclared identifier " + name);
            skip_ws();
            std::string next = peek_identifier();
            if (next == "at" || next == "in") unsupported(pos_, "'" + next + "' offset conditions are not supported");
            condition n;
            n.k = condition::kind::string_ref;
            n.identifier = name;
            return make(std::move(n));
        }
        if (c == '#' || c == '@' || c == '!') unsupported(at, std::string("'") + c + "' string operators are not supported");
        if (std::isdigit(static_cast<unsigned char>(c))) unsupported(at, "numeric expressions are not supported");

        std::string word = peek_identifier();
        if (word.empty()) syntax(at, std::string("unexpected character '") + c + "' in condition");
        pos_ += word.size();
        if (word == "true" || word == "false") {
            condition n;
            n.k = condition::kind::literal;
            n.literal = word == "true";
            return make(std::move(n));
        }
        if (word == "any" || word == "all") {
            skip_ws();
            if (peek_identifier() != "of") syntax(pos_, "expected 'of'");
            pos_ += 2;
            skip_ws();
            if (peek() == '(') unsupported(pos_, "string sets other than 'them' are not supported");
            if (peek_identifier() != "them") syntax(pos_, "expected 'them'");
            pos_ += 4;
            condition n;
            n.k = word == "any" ? condition::kind::any_of_them : condition::kind::all_of_them;
            return make(std::move(n));
        }
        if (word == "filesize") {
            skip_ws();
            condition n;
            n.k = condition::kind::filesize_compare;
            const std::size_t op_at = pos_;
            if (peek() == '<' && peek(1) == '=') { n.op = compare_op::le; pos_ += 2; }
            else if (peek() == '>' && peek(1) == '=') { n.op = compare_op::ge; pos_ += 2; }
            else if (peek() == '=' && peek(1) == '=') { n.op = compare_op::eq; pos_ += 2; }
            else if (peek() == '!' && peek(1) == '=') { n.op = compare_op::ne; pos_ += 2; }
            else if (peek() == '<') { n.op = compare_op::lt; pos_ += 1; }
            else if (peek() == '>') { n.op = compare_op::gt; pos_ += 1; }
            else unsupported(op_at, "filesize is only supported in comparisons against a constant");
            skip_ws();
            if (!std::isdigit(static_cast<unsigned char>(peek()))) unsupported(pos_, "filesize must be compared to a constant");
            n.value = parse_number();
            skip_ws();
            if (peek() == '+' || peek() == '-' || peek() == '*' || peek() == '\\' || peek() == '%') {
                unsupported(pos_, "arithmetic expressions are not supported");
            }
            return make(std::move(n));
        }
        if (condition_keywords.count(word)) syntax(at, "unexpected '" + word + "'");
        unsupported(at, "unsupported condition construct '" + word + "'");
    }

    std::string_view src_;
    std::string origin_;
    std::size_t pos_ = 0;
    std::size_t regex_pos_ = 0;
    const std::set<std::string, std::less<>>* declared_ = nullptr;
};

std::uint8_t fold_ascii(std::uint8_t b) { return (b >= 'A' && b <= 'Z') ? static_cast<std::uint8_t>(b + 32) : b; }

std::vector<std::size_t> find_masked(byte_view needle, byte_view mask, bool nocase, byte_view data) {
    std::vector<std::size_t> out;
    const std::size_t m = needle.size();
    if (m == 0 || m > data.size()) return out;
    const bool exact_first = mask.empty() || mask[0] == 0xFF;
    const std::uint8_t first = nocase ? fold_ascii(needle[0]) : needle[0];
    const std::size_t last_start = data.size() - m;

    for (std::size_t i = 0; i <= last_start;) {
        if (exact_first && !nocase) {
            const void* hit = std::memchr(data.data() + i, first, last_start - i + 1);
            if (!hit) break;
            i = static_cast<std::size_t>(static_cast<const std::uint8_t*>(hit) - data.data());
        }
        bool ok = true;
        for (std::size_t j = 0; j < m; ++j) {
            std::uint8_t d = data[i + j];
            std::uint8_t n = needle[j];
            if (!mask.empty()) {
                if ((d & mask[j]) != (n & mask[j])) { ok = false; break; }
            } else if (nocase) {
                if (fold_ascii(d) != fold_ascii(n)) { ok = false; break; }
            } else if (d != n) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(i);
        ++i;
    }
    return out;
}

byte_vector widen(byte_view text) {
    byte_vector out;
    out.reserve(text.size() * 2);
    for (auto b : text) {
        out.push_back(b);
        out.push_back(0);
    }
    return out;
}

}  // namespace

rule_set parse_rules(std::string_view source, const std::string& origin) {
    return rule_parser(source, origin).parse_file();
}

std::vector<std::filesystem::path> rule_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        if (ext == ".yar" || ext == ".yara") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.generic_string() < b.generic_string(); });
    return files;
}

rule_set load_rules_directory(const std::filesystem::path& dir) {
    rule_set all;
    std::set<std::string, std::less<>> names;
    for (const auto& file : rule_files(dir)) {
        rule_set part = parse_rules(read_text_file(file), file.generic_string());
        for (auto& r : part.rules) {
            if (!names.insert(r.name).second) {
                throw rule_error(rule_error_kind::duplicate_rule_name, "duplicate rule name '" + r.name + "'", r.line, 1,
                                 file.generic_string());
            }
            all.rules.push_back(std::move(r));
        }
    }
    return all;
}

std::vector<std::size_t> find_pattern(const string_pattern& pattern, byte_view data) {
    switch (pattern.kind) {
        case pattern_kind::hex: return find_masked(pattern.bytes, pattern.mask, false, data);
        case pattern_kind::regex: return pattern.regex ? pattern.regex->find_all(data) : std::vector<std::size_t>{};
        case pattern_kind::text: break;
    }
    std::vector<std::size_t> out;
    if (pattern.ascii) out = find_masked(pattern.bytes, {}, pattern.nocase, data);
    if (pattern.wide) {
        auto wide_hits = find_masked(widen(pattern.bytes), {}, pattern.nocase, data);
        out.insert(out.end(), wide_hits.begin(), wide_hits.end());
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    }
    return out;
}

bool evaluate_condition(const condition& cond, const string_hits& hits, std::uint64_t filesize) {
    switch (cond.k) {
        case condition::kind::literal: return cond.literal;
        case condition::kind::string_ref: {
            auto it = hits.find(cond.identifier);
            return it != hits.end() && !it->second.empty();
        }
        case condition::kind::any_of_them:
            return std::any_of(hits.begin(), hits.end(), [](const auto& kv) { return !kv.second.empty(); });
        case condition::kind::all_of_them:
            return !hits.empty() &&
                   std::all_of(hits.begin(), hits.end(), [](const auto& kv) { return !kv.second.empty(); });
        case condition::kind::filesize_compare:
            switch (cond.op) {
                case compare_op::lt: return filesize < cond.value;
                case compare_op::le: return filesize <= cond.value;
                case compare_op::gt: return filesize > cond.value;
                case compare_op::ge: return filesize >= cond.value;
                case compare_op::eq: return filesize == cond.value;
                case compare_op::ne: return filesize != cond.value;
            }
            return false;
        case condition::kind::logical_and:
            return evaluate_condition(*cond.children[0], hits, filesize) &&
                   evaluate_condition(*cond.children[1], hits, filesize);
        case condition::kind::logical_or:
            return evaluate_condition(*cond.children[0], hits, filesize) ||
                   evaluate_condition(*cond.children[1], hits, filesize);
        case condition::kind::logical_not: return !evaluate_condition(*cond.children[0], hits, filesize);
    }
    return false;
}

match_result match_rules(const rule_set& rules, byte_view data) {
    match_result result;
    for (const auto& r : rules.rules) {
        string_hits hits;
        for (const auto& p : r.strings) hits[p.identifier] = find_pattern(p, data);
        if (evaluate_condition(*r.cond, hits, data.size())) result.fired_rules.push_back(r.name);
        result.per_rule_string_hits.emplace(r.name, std::move(hits));
    }
    return result;
}

}  // namespace chainscan::sig
