// chainscan - sequential malware detection pipeline
// Signature rules: a YARA-subset parser and matcher over raw bytes.
//
// Supported rule surface:
//   rule NAME [: TAG ...] {
//     meta:      key = "text" | 123 | true | false
//     strings:   $id = "text" [nocase] [ascii] [wide]
//                $id = { 4D 5A ?? 00 }      (?X and X? nibble masks allowed)
//                $id = /regex/[is] [nocase]
//     condition: boolean expression over $id, `any of them`, `all of them`,
//                `filesize <|<=|>|>=|==|!= N[KB|MB]`, and/or/not, parentheses,
//                true, false
//   }
// Anything outside that surface (modules, counts, offsets, `for`, hex jumps,
// private/global rules, ...) is reported as an unsupported construct.

#ifndef CHAINSCAN_SIGNATURE_HPP
#define CHAINSCAN_SIGNATURE_HPP

#include "chainscan/byte_regex.hpp"
#include "chainscan/bytes.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chainscan::sig {

enum class rule_error_kind { syntax_error, undeclared_identifier, duplicate_rule_name, unsupported_construct };

const char* to_string(rule_error_kind kind);

class rule_error : public std::runtime_error {
public:
    rule_error(rule_error_kind kind, const std::string& message, std::size_t line, std::size_t column,
               std::string origin = {});

    rule_error_kind kind() const noexcept { return kind_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& origin() const noexcept { return origin_; }
    const std::string& message() const noexcept { return message_; }

private:
    rule_error_kind kind_;
    std::string message_;
    std::size_t line_;
    std::size_t column_;
    std::string origin_;
};

enum class pattern_kind { text, hex, regex };

struct string_pattern {
    std::string identifier;  // including the leading '$'
    pattern_kind kind = pattern_kind::text;
    /// text: literal bytes; hex: byte values under `mask`.
    byte_vector bytes;
    /// hex only: per-position mask (0xFF exact, 0x00 for ??, 0x0F / 0xF0 for nibble wildcards).
    byte_vector mask;
    std::string regex_source;
    std::shared_ptr<const byte_regex> regex;
    bool nocase = false;
    bool ascii = true;
    bool wide = false;
};

enum class compare_op { lt, le, gt, ge, eq, ne };

struct condition;
using condition_ptr = std::shared_ptr<const condition>;

struct condition {
    enum class kind { string_ref, any_of_them, all_of_them, filesize_compare, logical_and, logical_or, logical_not, literal };

    kind k = kind::literal;
    std::string identifier;  // string_ref
    compare_op op = compare_op::eq;
    std::uint64_t value = 0;  // filesize_compare
    bool literal = false;
    std::vector<condition_ptr> children;

    /// True when any node compares filesize.
    bool uses_filesize() const;
};

struct rule {
    std::string name;
    std::vector<std::string> tags;
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<string_pattern> strings;
    condition_ptr cond;
    std::size_t line = 0;
    std::string origin;
};

struct rule_set {
    std::vector<rule> rules;
    bool empty() const noexcept { return rules.empty(); }
    std::size_t size() const noexcept { return rules.size(); }
};

/// identifier -> match offsets
using string_hits = std::map<std::string, std::vector<std::size_t>>;

struct match_result {
    std::vector<std::string> fired_rules;                  // in rule-set order
    std::map<std::string, string_hits> per_rule_string_hits;  // every rule, every identifier
    bool any_fired() const noexcept { return !fired_rules.empty(); }
};

/// Throws rule_error carrying line/column.
rule_set parse_rules(std::string_view source, const std::string& origin = {});

/// Loads *.yar / *.yara files in lexicographic path order. Duplicate rule
/// names across files raise duplicate_rule_name.
rule_set load_rules_directory(const std::filesystem::path& dir);

/// Lists rule files in a directory in load order.
std::vector<std::filesystem::path> rule_files(const std::filesystem::path& dir);

/// Every occurrence (overlapping included) of a pattern in data, ascending.
std::vector<std::size_t> find_pattern(const string_pattern& pattern, byte_view data);

match_result match_rules(const rule_set& rules, byte_view data);

/// `hits` must contain every identifier declared by the owning rule; `any of
/// them` / `all of them` range over its keys.
bool evaluate_condition(const condition& cond, const string_hits& hits, std::uint64_t filesize);

}  // namespace chainscan::sig

#endif  // CHAINSCAN_SIGNATURE_HPP
