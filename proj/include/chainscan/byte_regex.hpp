// chainscan - sequential malware detection pipeline
// Small backtracking-free regex engine over raw bytes.
//
// Supported: literals, escapes (\xHH \n \r \t \d \w \s \D \W \S and escaped
// metacharacters), '.', classes with ranges and negation, groups,
// alternation, the quantifiers * + ? {n} {n,} {n,m} (a trailing '?' for lazy
// forms is accepted and has no effect), and the anchors ^ and $.
// Backreferences are rejected. Matching is a Pike-VM simulation, so the cost
// is bounded by pattern size times scanned bytes for every start offset.

#ifndef CHAINSCAN_BYTE_REGEX_HPP
#define CHAINSCAN_BYTE_REGEX_HPP

#include "chainscan/bytes.hpp"

#include <bitset>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace chainscan::sig {

class regex_error : public std::runtime_error {
public:
    regex_error(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

struct regex_flags {
    bool nocase = false;
    bool dot_all = false;
};

class byte_regex {
public:
    /// Throws regex_error for unsupported or malformed patterns, and for
    /// patterns that can match the empty string.
    explicit byte_regex(std::string_view pattern, regex_flags flags = {});

    /// True when a match starts exactly at `start`.
    bool matches_at(byte_view data, std::size_t start) const;

    /// Every start offset with at least one match, ascending.
    std::vector<std::size_t> find_all(byte_view data) const;

    const std::string& pattern() const noexcept { return pattern_; }
    std::size_t program_size() const noexcept { return program_.size(); }

private:
    enum class op { byte_set, split, jump, assert_begin, assert_end, match };
    struct instruction {
        op code;
        std::size_t set = 0;  // index into sets_ for byte_set
        std::size_t x = 0;
        std::size_t y = 0;
    };
    friend class regex_compiler;

    std::string pattern_;
    std::vector<instruction> program_;
    std::vector<std::bitset<256>> sets_;
    std::bitset<256> first_bytes_;
};

}  // namespace chainscan::sig

#endif  // CHAINSCAN_BYTE_REGEX_HPP
