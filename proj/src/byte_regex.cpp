#include "chainscan/byte_regex.hpp"

#include <cctype>
#include <vector>

namespace chainscan::sig {

namespace {

constexpr std::size_t max_program_size = 200000;
constexpr int max_repeat = 1000;
constexpr int unbounded = -1;

struct node {
    enum class kind { set, concat, alt, repeat, bol, eol } k = kind::concat;
    std::bitset<256> set;
    std::vector<node> kids;
    int min = 0;
    int max = 0;
};

std::bitset<256> range_set(int lo, int hi) {
    std::bitset<256> s;
    for (int c = lo; c <= hi; ++c) s.set(static_cast<std::size_t>(c));
    return s;
}

std::bitset<256> digit_set() { return range_set('0', '9'); }
std::bitset<256> word_set() { return range_set('a', 'z') | range_set('A', 'Z') | digit_set() | range_set('_', '_'); }
std::bitset<256> space_set() {
    std::bitset<256> s;
    for (char c : std::string_view(" \t\n\r\f\v")) s.set(static_cast<unsigned char>(c));
    return s;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

class regex_compiler {
public:
    regex_compiler(std::string_view src, regex_flags flags, byte_regex& out) : src_(src), flags_(flags), out_(out) {}

    void run() {
        node root = parse_alt();
        if (pos_ != src_.size()) error("unexpected ')'");
        emit(root);  // entry point is instruction 0
        out_.program_.push_back({byte_regex::op::match});
        check_empty_and_first_bytes();
    }

private:
    using op = byte_regex::op;

    [[noreturn]] void error(const std::string& msg) const { throw regex_error("regex: " + msg, pos_); }
    bool at_end() const { return pos_ >= src_.size(); }
    char peek() const { return src_[pos_]; }
    char take() { return src_[pos_++]; }

    std::bitset<256> fold(std::bitset<256> s) const {
        if (!flags_.nocase) return s;
        for (int c = 'a'; c <= 'z'; ++c) {
            auto lo = static_cast<std::size_t>(c);
            auto up = static_cast<std::size_t>(c - 'a' + 'A');
            if (s[lo] || s[up]) {
                s.set(lo);
                s.set(up);
            }
        }
        return s;
    }

    node set_node(std::bitset<256> s) const {
        node n;
        n.k = node::kind::set;
        n.set = fold(s);
        return n;
    }

    node parse_alt() {
        node first = parse_concat();
        if (at_end() || peek() != '|') return first;
        node alt;
        alt.k = node::kind::alt;
        alt.kids.push_back(std::move(first));
        while (!at_end() && peek() == '|') {
            ++pos_;
            alt.kids.push_back(parse_concat());
        }
        return alt;
    }

    node parse_concat() {
        node cat;
        cat.k = node::kind::concat;
        while (!at_end() && peek() != '|' && peek() != ')') cat.kids.push_back(parse_repeat());
        return cat;
    }

    bool parse_braces(int& lo, int& hi) {
        // at '{'; leaves pos_ untouched when this is not a quantifier
        std::size_t save = pos_;
        ++pos_;
        auto number = [&](int& v) {
            std::size_t begin = pos_;
            long acc = 0;
            while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
                acc = acc * 10 + (take() - '0');
                if (acc > max_repeat) error("repetition count too large");
            }
            v = static_cast<int>(acc);
            return pos_ > begin;
        };
        bool has_lo = number(lo);
        hi = lo;
        if (!at_end() && peek() == ',') {
            ++pos_;
            if (!number(hi)) hi = unbounded;
        }
        if (at_end() || peek() != '}' || !has_lo) {
            pos_ = save;
            return false;
        }
        ++pos_;
        if (hi != unbounded && hi < lo) error("bad repetition range");
        return true;
    }

    node parse_repeat() {
        node atom = parse_atom();
        while (!at_end()) {
            int lo = 0, hi = 0;
            char c = peek();
            if (c == '*') { lo = 0; hi = unbounded; ++pos_; }
            else if (c == '+') { lo = 1; hi = unbounded; ++pos_; }
            else if (c == '?') { lo = 0; hi = 1; ++pos_; }
            else if (c == '{') {
                if (!parse_braces(lo, hi)) break;
            } else {
                break;
            }
            if (!at_end() && peek() == '?') ++pos_;  // lazy: same match set
            if (atom.k == node::kind::bol || atom.k == node::kind::eol) error("quantified anchor");
            node rep;
            rep.k = node::kind::repeat;
            rep.min = lo;
            rep.max = hi;
            rep.kids.push_back(std::move(atom));
            atom = std::move(rep);
        }
        return atom;
    }

    std::bitset<256> parse_escape_set(bool in_class) {
        if (at_end()) error("trailing backslash");
        char c = take();
        switch (c) {
            case 'n': return range_set('\n', '\n');
            case 'r': return range_set('\r', '\r');
            case 't': return range_set('\t', '\t');
            case 'f': return range_set('\f', '\f');
            case 'v': return range_set('\v', '\v');
            case '0': return range_set(0, 0);
            case 'd': return digit_set();
            case 'D': return ~digit_set();
            case 'w': return word_set();
            case 'W': return ~word_set();
            case 's': return space_set();
            case 'S': return ~space_set();
            case 'x': {
                if (pos_ + 2 > src_.size()) error("short \\x escape");
                int hi = hex_value(take());
                int lo = hex_value(take());
                if (hi < 0 || lo < 0) error("bad \\x escape");
                return range_set(hi * 16 + lo, hi * 16 + lo);
            }
            case 'b':
            case 'B':
                if (!in_class) error("word boundaries are not supported");
                return range_set('\b', '\b');
            default:
                if (std::isdigit(static_cast<unsigned char>(c))) error("backreferences are not supported");
                if (std::isalnum(static_cast<unsigned char>(c))) error(std::string("unknown escape \\") + c);
                return range_set(static_cast<unsigned char>(c), static_cast<unsigned char>(c));
        }
    }

    node parse_class() {
        // at char after '['
        bool negate = false;
        if (!at_end() && peek() == '^') {
            negate = true;
            ++pos_;
        }
        std::bitset<256> s;
        bool first = true;
        while (true) {
            if (at_end()) error("unterminated class");
            char c = peek();
            if (c == ']' && !first) {
                ++pos_;
                break;
            }
            first = false;
            std::bitset<256> item;
            int single = -1;
            if (c == '\\') {
                ++pos_;
                item = parse_escape_set(true);
                if (item.count() == 1) {
                    for (int i = 0; i < 256; ++i) if (item[static_cast<std::size_t>(i)]) single = i;
                }
            } else {
                ++pos_;
                single = static_cast<unsigned char>(c);
                item.set(static_cast<std::size_t>(single));
            }
            if (single >= 0 && pos_ + 1 < src_.size() && peek() == '-' && src_[pos_ + 1] != ']') {
                ++pos_;
                int hi;
                if (peek() == '\\') {
                    ++pos_;
                    auto hs = parse_escape_set(true);
                    if (hs.count() != 1) error("bad class range");
                    hi = 0;
                    for (int i = 0; i < 256; ++i) if (hs[static_cast<std::size_t>(i)]) hi = i;
                } else {
                    hi = static_cast<unsigned char>(take());
                }
                if (hi < single) error("bad class range");
                item = range_set(single, hi);
            }
            s |= item;
        }
        s = fold(s);
        if (negate) s = ~s;
        node n;
        n.k = node::kind::set;
        n.set = s;
        return n;
    }

    node parse_atom() {
        if (at_end()) error("unexpected end");
        char c = take();
        switch (c) {
            case '(': {
                if (!at_end() && peek() == '?') {
                    if (pos_ + 1 < src_.size() && src_[pos_ + 1] == ':') pos_ += 2;
                    else error("unsupported group construct");
                }
                node inner = parse_alt();
                if (at_end() || take() != ')') error("missing ')'");
                return inner;
            }
            case '[': return parse_class();
            case '.': {
                std::bitset<256> s;
                s.set();
                if (!flags_.dot_all) s.reset('\n');
                node n;
                n.k = node::kind::set;
                n.set = s;
                return n;
            }
            case '^': { node n; n.k = node::kind::bol; return n; }
            case '$': { node n; n.k = node::kind::eol; return n; }
            case '\\': return set_node(parse_escape_set(false));
            case '*':
            case '+':
            case '?': error("quantifier without operand");
            default: return set_node(range_set(static_cast<unsigned char>(c), static_cast<unsigned char>(c)));
        }
    }

    std::size_t push(byte_regex::instruction ins) {
        if (out_.program_.size() >= max_program_size) error("pattern too large");
        out_.program_.push_back(ins);
        return out_.program_.size() - 1;
    }

    // Every instruction continues at the next emitted one unless patched.
    void emit(const node& n) {
        auto& prog = out_.program_;
        switch (n.k) {
            case node::kind::set: {
                out_.sets_.push_back(n.set);
                std::size_t pc = push({op::byte_set, out_.sets_.size() - 1});
                prog[pc].x = pc + 1;
                break;
            }
            case node::kind::bol: {
                std::size_t pc = push({op::assert_begin});
                prog[pc].x = pc + 1;
                break;
            }
            case node::kind::eol: {
                std::size_t pc = push({op::assert_end});
                prog[pc].x = pc + 1;
                break;
            }
            case node::kind::concat:
                for (const auto& k : n.kids) emit(k);
                break;
            case node::kind::alt: {
                std::vector<std::size_t> jumps;
                for (std::size_t i = 0; i < n.kids.size(); ++i) {
                    if (i + 1 < n.kids.size()) {
                        std::size_t split = push({op::split});
                        prog[split].x = split + 1;
                        emit(n.kids[i]);
                        jumps.push_back(push({op::jump}));
                        prog[split].y = prog.size();
                    } else {
                        emit(n.kids[i]);
                    }
                }
                for (auto j : jumps) prog[j].x = prog.size();
                break;
            }
            case node::kind::repeat: {
                const node& body = n.kids.front();
                for (int i = 0; i < n.min; ++i) emit(body);
                if (n.max == unbounded) {
                    std::size_t split = push({op::split});
                    prog[split].x = split + 1;
                    emit(body);
                    std::size_t back = push({op::jump});
                    prog[back].x = split;
                    prog[split].y = prog.size();
                } else {
                    std::vector<std::size_t> splits;
                    for (int i = n.min; i < n.max; ++i) {
                        std::size_t split = push({op::split});
                        prog[split].x = split + 1;
                        splits.push_back(split);
                        emit(body);
                    }
                    for (auto s : splits) prog[s].y = prog.size();
                }
                break;
            }
        }
    }

    void check_empty_and_first_bytes() {
        const auto& prog = out_.program_;
        std::vector<bool> seen(prog.size(), false);
        std::vector<std::size_t> stack{0};
        while (!stack.empty()) {
            std::size_t pc = stack.back();
            stack.pop_back();
            if (pc >= prog.size() || seen[pc]) continue;
            seen[pc] = true;
            const auto& ins = prog[pc];
            switch (ins.code) {
                case op::match: pos_ = 0; error("pattern can match the empty string");
                case op::byte_set: out_.first_bytes_ |= out_.sets_[ins.set]; break;
                case op::split: stack.push_back(ins.x); stack.push_back(ins.y); break;
                case op::jump:
                case op::assert_begin:
                case op::assert_end: stack.push_back(ins.x); break;
            }
        }
    }

    std::string_view src_;
    regex_flags flags_;
    byte_regex& out_;
    std::size_t pos_ = 0;
};

byte_regex::byte_regex(std::string_view pattern, regex_flags flags) : pattern_(pattern) {
    regex_compiler(pattern, flags, *this).run();
}

bool byte_regex::matches_at(byte_view data, std::size_t start) const {
    const std::size_t n = data.size();
    std::vector<std::size_t> current, next, stack;
    std::vector<std::size_t> mark(program_.size(), static_cast<std::size_t>(-1));
    std::size_t generation = 0;

    // returns true when the closure reaches match
    auto add = [&](std::vector<std::size_t>& list, std::size_t pc0, std::size_t pos) {
        stack.assign(1, pc0);
        while (!stack.empty()) {
            std::size_t pc = stack.back();
            stack.pop_back();
            if (mark[pc] == generation) continue;
            mark[pc] = generation;
            const auto& ins = program_[pc];
            switch (ins.code) {
                case op::match: return true;
                case op::byte_set: list.push_back(pc); break;
                case op::jump: stack.push_back(ins.x); break;
                case op::split: stack.push_back(ins.y); stack.push_back(ins.x); break;
                case op::assert_begin: if (pos == 0) stack.push_back(ins.x); break;
                case op::assert_end: if (pos == n) stack.push_back(ins.x); break;
            }
        }
        return false;
    };

    if (add(current, 0, start)) return true;
    for (std::size_t pos = start; pos < n && !current.empty(); ++pos) {
        ++generation;
        next.clear();
        const std::size_t b = data[pos];
        for (std::size_t pc : current) {
            const auto& ins = program_[pc];
            if (sets_[ins.set][b] && add(next, ins.x, pos + 1)) return true;
        }
        current.swap(next);
    }
    return false;
}

std::vector<std::size_t> byte_regex::find_all(byte_view data) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!first_bytes_[data[i]]) continue;
        if (matches_at(data, i)) out.push_back(i);
    }
    return out;
}

}  // namespace chainscan::sig
