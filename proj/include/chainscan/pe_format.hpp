// chainscan - sequential malware detection pipeline
// Windows Portable Executable parsing, fixture building and
// functionality-preserving manipulation (section injection, padding).

#ifndef CHAINSCAN_PE_FORMAT_HPP
#define CHAINSCAN_PE_FORMAT_HPP

#include "chainscan/bytes.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chainscan::pe {

enum class pe_error_kind {
    bad_dos_magic,
    truncated_headers,
    bad_pe_signature,
    bad_optional_header,
    section_out_of_bounds,
    misaligned_section,
    invalid_spec,
    parse_failed,
    no_header_room,
};

const char* to_string(pe_error_kind kind);

class pe_error : public std::runtime_error {
public:
    pe_error(pe_error_kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    pe_error_kind kind() const noexcept { return kind_; }

private:
    pe_error_kind kind_;
};

namespace section_flags {
inline constexpr std::uint32_t cnt_code = 0x00000020;
inline constexpr std::uint32_t cnt_initialized_data = 0x00000040;
inline constexpr std::uint32_t cnt_uninitialized_data = 0x00000080;
inline constexpr std::uint32_t mem_execute = 0x20000000;
inline constexpr std::uint32_t mem_read = 0x40000000;
inline constexpr std::uint32_t mem_write = 0x80000000;
}  // namespace section_flags

inline constexpr std::uint16_t optional_magic_pe32 = 0x10b;
inline constexpr std::uint16_t optional_magic_pe32_plus = 0x20b;

inline constexpr std::size_t dos_header_size = 64;
inline constexpr std::size_t coff_header_size = 20;
inline constexpr std::size_t section_entry_size = 40;

enum class data_directory_index : std::size_t {
    exports = 0,
    imports = 1,
    resources = 2,
    exceptions = 3,
    security = 4,
    base_relocations = 5,
    debug = 6,
    tls = 9,
};

struct data_directory {
    std::uint32_t rva = 0;
    std::uint32_t size = 0;
};

struct section_entry {
    std::array<char, 8> name{};  // NUL padded
    std::uint32_t virtual_size = 0;
    std::uint32_t virtual_address = 0;
    std::uint32_t raw_size = 0;
    std::uint32_t raw_offset = 0;
    std::uint32_t characteristics = 0;

    /// Name with trailing NULs stripped.
    std::string name_string() const;
    bool is_executable() const noexcept {
        return (characteristics & (section_flags::mem_execute | section_flags::cnt_code)) != 0;
    }
};

struct nt_headers {
    std::uint16_t machine = 0;
    std::uint16_t number_of_sections = 0;
    std::uint32_t timestamp = 0;
    std::uint32_t pointer_to_symbol_table = 0;
    std::uint16_t size_of_optional_header = 0;
    std::uint16_t characteristics = 0;

    std::uint16_t magic = 0;
    std::uint32_t size_of_code = 0;
    std::uint32_t size_of_initialized_data = 0;
    std::uint32_t size_of_uninitialized_data = 0;
    std::uint32_t entry_point_rva = 0;
    std::uint64_t image_base = 0;
    std::uint32_t section_alignment = 0;
    std::uint32_t file_alignment = 0;
    std::uint32_t size_of_image = 0;
    std::uint32_t size_of_headers = 0;
    std::uint16_t subsystem = 0;
    std::uint16_t dll_characteristics = 0;
    std::vector<data_directory> data_directories;

    bool is_pe32_plus() const noexcept { return magic == optional_magic_pe32_plus; }
};

struct import_entry {
    std::string library;
    std::vector<std::string> functions;  // "ordinal<N>" for ordinal imports
};

/// Parsed PE image. Immutable after parse_pe; owns a copy of the raw bytes.
class pe_file {
public:
    const std::array<std::uint8_t, dos_header_size>& dos_header() const noexcept { return dos_header_; }
    std::uint32_t e_lfanew() const noexcept { return e_lfanew_; }
    const nt_headers& nt() const noexcept { return nt_; }
    const std::vector<section_entry>& sections() const noexcept { return sections_; }
    byte_view bytes() const noexcept { return raw_; }
    std::size_t raw_size() const noexcept { return raw_.size(); }

    /// File offset where the section table starts.
    std::size_t section_table_offset() const noexcept { return section_table_offset_; }
    std::size_t overlay_offset() const noexcept { return overlay_offset_; }
    byte_view overlay() const noexcept { return byte_view(raw_).subspan(overlay_offset_); }
    byte_view section_payload(const section_entry& s) const noexcept {
        if (s.raw_size == 0) return {};
        return byte_view(raw_).subspan(s.raw_offset, s.raw_size);
    }

    data_directory directory(data_directory_index idx) const noexcept;

    /// Best-effort optional structures; empty when absent or malformed.
    const std::vector<import_entry>& imports() const noexcept { return imports_; }
    const std::vector<std::string>& exports() const noexcept { return exports_; }

    /// Maps an RVA to a file offset through the section table.
    std::optional<std::size_t> rva_to_offset(std::uint32_t rva) const noexcept;

private:
    friend pe_file parse_pe(byte_view bytes);

    std::array<std::uint8_t, dos_header_size> dos_header_{};
    std::uint32_t e_lfanew_ = 0;
    nt_headers nt_;
    std::vector<section_entry> sections_;
    byte_vector raw_;
    std::size_t section_table_offset_ = 0;
    std::size_t overlay_offset_ = 0;
    std::vector<import_entry> imports_;
    std::vector<std::string> exports_;
};

/// Throws pe_error with one of bad_dos_magic, truncated_headers,
/// bad_pe_signature, bad_optional_header, section_out_of_bounds,
/// misaligned_section.
pe_file parse_pe(byte_view bytes);

struct section_spec {
    std::string name;
    byte_vector content;
    /// Defaults: code|exec|read for the first section, initialized data|read otherwise.
    std::optional<std::uint32_t> characteristics;
};

struct pe_spec {
    std::vector<section_spec> sections;
    std::uint32_t file_alignment = 0x200;
    std::uint32_t section_alignment = 0x1000;
    bool pe32_plus = false;
    std::uint16_t machine = 0x14c;
    std::uint16_t subsystem = 2;
    std::uint16_t dll_characteristics = 0;
    /// Defaults to the first section's RVA (0 without sections).
    std::optional<std::uint32_t> entry_point_rva;
    /// Emitted as an extra ".idata" section when non-empty.
    std::vector<import_entry> imports;
    /// Emitted as an extra ".edata" section when non-empty.
    std::vector<std::string> exports;
    /// Reserved zeroed section-table slots beyond the emitted sections.
    std::uint32_t spare_section_slots = 0;
    byte_vector overlay;
};

/// Deterministic minimal PE writer used as the fixture generator.
/// Throws pe_error(invalid_spec) for non power-of-two alignments or names
/// longer than 8 bytes.
byte_vector build_minimal_pe(const pe_spec& spec);

struct inject_options {
    /// Grow the header region (shifting every payload forward) when the
    /// section table has no slack for one more entry.
    bool allow_relocation = true;
};

/// Adds one readable initialized-data section holding `content`.
/// Throws pe_error(parse_failed) for invalid input and
/// pe_error(no_header_room) when the table cannot grow.
byte_vector inject_section(byte_view pe_bytes, const std::string& name, byte_view content,
                           const inject_options& options = {});

/// Appends `content` to the overlay. Throws pe_error(parse_failed).
byte_vector append_padding(byte_view pe_bytes, byte_view content);

struct section_payload {
    section_entry entry;
    byte_vector payload;
};

std::vector<section_payload> extract_sections(const pe_file& pe);

inline std::uint64_t align_up(std::uint64_t v, std::uint64_t alignment) {
    if (alignment == 0) return v;
    return (v + alignment - 1) / alignment * alignment;
}

inline bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace chainscan::pe

#endif  // CHAINSCAN_PE_FORMAT_HPP
