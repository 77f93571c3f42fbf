#include "chainscan/pe_format.hpp"

#include <algorithm>
#include <cstring>

namespace chainscan::pe {

namespace {

constexpr std::uint32_t lfanew_field = 0x3C;
constexpr std::size_t max_import_descriptors = 4096;
constexpr std::size_t max_thunks = 65536;
constexpr std::size_t max_name_length = 512;

std::size_t directory_base(std::uint16_t magic) {
    return magic == optional_magic_pe32_plus ? 112 : 96;
}

[[noreturn]] void fail(pe_error_kind kind, const std::string& msg) { throw pe_error(kind, msg); }

std::optional<std::string> read_cstring(byte_view data, std::size_t off) {
    if (off >= data.size()) return std::nullopt;
    std::string out;
    for (std::size_t i = off; i < data.size() && out.size() < max_name_length; ++i) {
        if (data[i] == 0) return out;
        out.push_back(static_cast<char>(data[i]));
    }
    return std::nullopt;
}

}  // namespace

const char* to_string(pe_error_kind kind) {
    switch (kind) {
        case pe_error_kind::bad_dos_magic: return "bad_dos_magic";
        case pe_error_kind::truncated_headers: return "truncated_headers";
        case pe_error_kind::bad_pe_signature: return "bad_pe_signature";
        case pe_error_kind::bad_optional_header: return "bad_optional_header";
        case pe_error_kind::section_out_of_bounds: return "section_out_of_bounds";
        case pe_error_kind::misaligned_section: return "misaligned_section";
        case pe_error_kind::invalid_spec: return "invalid_spec";
        case pe_error_kind::parse_failed: return "parse_failed";
        case pe_error_kind::no_header_room: return "no_header_room";
    }
    return "unknown";
}

std::string section_entry::name_string() const {
    auto end = std::find(name.begin(), name.end(), '\0');
    return std::string(name.begin(), end);
}

data_directory pe_file::directory(data_directory_index idx) const noexcept {
    auto i = static_cast<std::size_t>(idx);
    if (i >= nt_.data_directories.size()) return {};
    return nt_.data_directories[i];
}

std::optional<std::size_t> pe_file::rva_to_offset(std::uint32_t rva) const noexcept {
    for (const auto& s : sections_) {
        std::uint64_t span = std::max(s.virtual_size, s.raw_size);
        if (rva >= s.virtual_address && rva < s.virtual_address + span) {
            std::uint32_t delta = rva - s.virtual_address;
            if (delta >= s.raw_size) return std::nullopt;
            return static_cast<std::size_t>(s.raw_offset) + delta;
        }
    }
    if (rva < nt_.size_of_headers && rva < raw_.size()) return rva;
    return std::nullopt;
}

namespace {

std::vector<import_entry> parse_imports(const pe_file& pe) {
    std::vector<import_entry> out;
    auto dir = pe.directory(data_directory_index::imports);
    if (dir.rva == 0) return out;
    auto data = pe.bytes();
    auto desc_off = pe.rva_to_offset(dir.rva);
    if (!desc_off) return out;
    const std::size_t thunk_size = pe.nt().is_pe32_plus() ? 8 : 4;

    for (std::size_t i = 0; i < max_import_descriptors; ++i) {
        std::size_t d = *desc_off + i * 20;
        if (d + 20 > data.size()) break;
        std::uint32_t oft = read_u32(data, d);
        std::uint32_t name_rva = read_u32(data, d + 12);
        std::uint32_t ft = read_u32(data, d + 16);
        if (oft == 0 && name_rva == 0 && ft == 0) break;

        auto name_off = pe.rva_to_offset(name_rva);
        if (!name_off) continue;
        auto lib = read_cstring(data, *name_off);
        if (!lib) continue;

        import_entry entry{*lib, {}};
        auto thunk_off = pe.rva_to_offset(oft != 0 ? oft : ft);
        if (thunk_off) {
            for (std::size_t t = 0; t < max_thunks; ++t) {
                std::size_t o = *thunk_off + t * thunk_size;
                if (o + thunk_size > data.size()) break;
                std::uint64_t thunk = thunk_size == 8 ? read_u64(data, o) : read_u32(data, o);
                if (thunk == 0) break;
                std::uint64_t ordinal_flag = thunk_size == 8 ? (1ULL << 63) : (1ULL << 31);
                if (thunk & ordinal_flag) {
                    entry.functions.push_back("ordinal" + std::to_string(thunk & 0xFFFF));
                    continue;
                }
                auto hint_off = pe.rva_to_offset(static_cast<std::uint32_t>(thunk & 0x7FFFFFFF));
                if (!hint_off) continue;
                if (auto fn = read_cstring(data, *hint_off + 2)) entry.functions.push_back(*fn);
            }
        }
        out.push_back(std::move(entry));
    }
    return out;
}

std::vector<std::string> parse_exports(const pe_file& pe) {
    std::vector<std::string> out;
    auto dir = pe.directory(data_directory_index::exports);
    if (dir.rva == 0) return out;
    auto data = pe.bytes();
    auto off = pe.rva_to_offset(dir.rva);
    if (!off || *off + 40 > data.size()) return out;
    std::uint32_t count = read_u32(data, *off + 24);
    auto names_off = pe.rva_to_offset(read_u32(data, *off + 32));
    if (!names_off) return out;
    count = std::min<std::uint32_t>(count, max_thunks);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::size_t o = *names_off + 4 * static_cast<std::size_t>(i);
        if (o + 4 > data.size()) break;
        auto name_off = pe.rva_to_offset(read_u32(data, o));
        if (!name_off) continue;
        if (auto name = read_cstring(data, *name_off)) out.push_back(*name);
    }
    return out;
}

}  // namespace

pe_file parse_pe(byte_view bytes) {
    if (bytes.size() < 2) fail(pe_error_kind::truncated_headers, "file shorter than DOS magic");
    if (bytes[0] != 'M' || bytes[1] != 'Z') fail(pe_error_kind::bad_dos_magic, "missing MZ magic");
    if (bytes.size() < dos_header_size) fail(pe_error_kind::truncated_headers, "DOS header truncated");

    pe_file pe;
    std::copy_n(bytes.begin(), dos_header_size, pe.dos_header_.begin());
    pe.e_lfanew_ = read_u32(bytes, lfanew_field);

    const std::uint64_t lfanew = pe.e_lfanew_;
    if (lfanew + 4 + coff_header_size > bytes.size()) fail(pe_error_kind::truncated_headers, "e_lfanew beyond file");
    if (bytes[lfanew] != 'P' || bytes[lfanew + 1] != 'E' || bytes[lfanew + 2] != 0 || bytes[lfanew + 3] != 0) {
        fail(pe_error_kind::bad_pe_signature, "missing PE\\0\\0 signature");
    }

    auto& nt = pe.nt_;
    const std::size_t coff = lfanew + 4;
    nt.machine = read_u16(bytes, coff);
    nt.number_of_sections = read_u16(bytes, coff + 2);
    nt.timestamp = read_u32(bytes, coff + 4);
    nt.pointer_to_symbol_table = read_u32(bytes, coff + 8);
    nt.size_of_optional_header = read_u16(bytes, coff + 16);
    nt.characteristics = read_u16(bytes, coff + 18);

    const std::size_t opt = coff + coff_header_size;
    if (opt + nt.size_of_optional_header > bytes.size()) fail(pe_error_kind::truncated_headers, "optional header truncated");
    if (nt.size_of_optional_header < 2) fail(pe_error_kind::bad_optional_header, "optional header missing");
    nt.magic = read_u16(bytes, opt);
    if (nt.magic != optional_magic_pe32 && nt.magic != optional_magic_pe32_plus) {
        fail(pe_error_kind::bad_optional_header, "unknown optional header magic");
    }
    const std::size_t dd_base = directory_base(nt.magic);
    if (nt.size_of_optional_header < dd_base) fail(pe_error_kind::bad_optional_header, "optional header too small");

    nt.size_of_code = read_u32(bytes, opt + 4);
    nt.size_of_initialized_data = read_u32(bytes, opt + 8);
    nt.size_of_uninitialized_data = read_u32(bytes, opt + 12);
    nt.entry_point_rva = read_u32(bytes, opt + 16);
    nt.image_base = nt.is_pe32_plus() ? read_u64(bytes, opt + 24) : read_u32(bytes, opt + 28);
    nt.section_alignment = read_u32(bytes, opt + 32);
    nt.file_alignment = read_u32(bytes, opt + 36);
    nt.size_of_image = read_u32(bytes, opt + 56);
    nt.size_of_headers = read_u32(bytes, opt + 60);
    nt.subsystem = read_u16(bytes, opt + 68);
    nt.dll_characteristics = read_u16(bytes, opt + 70);
    std::uint32_t rva_count = read_u32(bytes, opt + dd_base - 4);
    std::size_t dir_count = std::min<std::size_t>({rva_count, (nt.size_of_optional_header - dd_base) / 8, 16});
    for (std::size_t i = 0; i < dir_count; ++i) {
        nt.data_directories.push_back({read_u32(bytes, opt + dd_base + 8 * i), read_u32(bytes, opt + dd_base + 8 * i + 4)});
    }

    pe.section_table_offset_ = opt + nt.size_of_optional_header;
    const std::uint64_t table_end =
        pe.section_table_offset_ + static_cast<std::uint64_t>(nt.number_of_sections) * section_entry_size;
    if (table_end > bytes.size()) fail(pe_error_kind::truncated_headers, "section table truncated");

    std::uint64_t last_extent = std::min<std::uint64_t>(std::max<std::uint64_t>(nt.size_of_headers, table_end), bytes.size());
    for (std::uint16_t i = 0; i < nt.number_of_sections; ++i) {
        const std::size_t e = pe.section_table_offset_ + i * section_entry_size;
        section_entry s;
        std::memcpy(s.name.data(), bytes.data() + e, 8);
        s.virtual_size = read_u32(bytes, e + 8);
        s.virtual_address = read_u32(bytes, e + 12);
        s.raw_size = read_u32(bytes, e + 16);
        s.raw_offset = read_u32(bytes, e + 20);
        s.characteristics = read_u32(bytes, e + 36);
        if (s.raw_size > 0) {
            if (static_cast<std::uint64_t>(s.raw_offset) + s.raw_size > bytes.size()) {
                fail(pe_error_kind::section_out_of_bounds, "section " + s.name_string() + " exceeds file");
            }
            if (nt.file_alignment > 0 && s.raw_offset % nt.file_alignment != 0) {
                fail(pe_error_kind::misaligned_section, "section " + s.name_string() + " raw offset not aligned");
            }
            last_extent = std::max<std::uint64_t>(last_extent, static_cast<std::uint64_t>(s.raw_offset) + s.raw_size);
        }
        pe.sections_.push_back(s);
    }
    pe.overlay_offset_ = static_cast<std::size_t>(last_extent);
    pe.raw_.assign(bytes.begin(), bytes.end());

    pe.imports_ = parse_imports(pe);
    pe.exports_ = parse_exports(pe);
    return pe;
}

namespace {

struct layout_section {
    std::string name;
    byte_vector content;
    std::uint32_t characteristics;
    std::uint32_t va = 0;
    std::uint32_t raw_offset = 0;
    std::uint32_t raw_size = 0;
};

void put_bytes(byte_vector& buf, std::size_t off, std::string_view s) {
    std::copy(s.begin(), s.end(), buf.begin() + static_cast<std::ptrdiff_t>(off));
}

// Import directory image laid out at `base_rva`.
byte_vector build_import_blob(const std::vector<import_entry>& imports, std::uint32_t base_rva, bool pe32_plus,
                              std::uint32_t& iat_rva, std::uint32_t& iat_size) {
    const std::size_t thunk = pe32_plus ? 8 : 4;
    std::size_t descriptors = (imports.size() + 1) * 20;
    std::size_t thunk_bytes = 0;
    for (const auto& lib : imports) thunk_bytes += (lib.functions.size() + 1) * thunk;

    const std::size_t ilt_start = descriptors;
    const std::size_t iat_start = ilt_start + thunk_bytes;
    std::size_t names_start = iat_start + thunk_bytes;

    // hint/name entries then dll names
    std::vector<std::vector<std::size_t>> fn_offsets;
    std::vector<std::size_t> lib_offsets;
    std::size_t cursor = names_start;
    for (const auto& lib : imports) {
        std::vector<std::size_t> offs;
        for (const auto& fn : lib.functions) {
            offs.push_back(cursor);
            cursor += align_up(2 + fn.size() + 1, 2);
        }
        fn_offsets.push_back(std::move(offs));
    }
    for (const auto& lib : imports) {
        lib_offsets.push_back(cursor);
        cursor += lib.library.size() + 1;
    }

    byte_vector blob(cursor, 0);
    std::size_t ilt = ilt_start;
    std::size_t iat = iat_start;
    for (std::size_t i = 0; i < imports.size(); ++i) {
        const std::size_t d = i * 20;
        write_u32(blob, d, static_cast<std::uint32_t>(base_rva + ilt));
        write_u32(blob, d + 12, static_cast<std::uint32_t>(base_rva + lib_offsets[i]));
        write_u32(blob, d + 16, static_cast<std::uint32_t>(base_rva + iat));
        put_bytes(blob, lib_offsets[i], imports[i].library);
        for (std::size_t f = 0; f < imports[i].functions.size(); ++f) {
            const auto rva = static_cast<std::uint32_t>(base_rva + fn_offsets[i][f]);
            if (pe32_plus) {
                write_u64(blob, ilt, rva);
                write_u64(blob, iat, rva);
            } else {
                write_u32(blob, ilt, rva);
                write_u32(blob, iat, rva);
            }
            put_bytes(blob, fn_offsets[i][f] + 2, imports[i].functions[f]);
            ilt += thunk;
            iat += thunk;
        }
        ilt += thunk;
        iat += thunk;
    }
    iat_rva = static_cast<std::uint32_t>(base_rva + iat_start);
    iat_size = static_cast<std::uint32_t>(thunk_bytes);
    return blob;
}

byte_vector build_export_blob(std::vector<std::string> names, std::uint32_t base_rva, std::uint32_t target_rva) {
    std::sort(names.begin(), names.end());
    const std::size_t n = names.size();
    const std::size_t functions = 40;
    const std::size_t name_ptrs = functions + 4 * n;
    const std::size_t ordinals = name_ptrs + 4 * n;
    const std::size_t dll_name = ordinals + 2 * n;
    static constexpr std::string_view module_name = "fixture.dll";
    std::size_t cursor = dll_name + module_name.size() + 1;
    std::vector<std::size_t> name_offs;
    for (const auto& s : names) {
        name_offs.push_back(cursor);
        cursor += s.size() + 1;
    }
    byte_vector blob(cursor, 0);
    write_u32(blob, 12, static_cast<std::uint32_t>(base_rva + dll_name));
    write_u32(blob, 16, 1);
    write_u32(blob, 20, static_cast<std::uint32_t>(n));
    write_u32(blob, 24, static_cast<std::uint32_t>(n));
    write_u32(blob, 28, static_cast<std::uint32_t>(base_rva + functions));
    write_u32(blob, 32, static_cast<std::uint32_t>(base_rva + name_ptrs));
    write_u32(blob, 36, static_cast<std::uint32_t>(base_rva + ordinals));
    put_bytes(blob, dll_name, module_name);
    for (std::size_t i = 0; i < n; ++i) {
        write_u32(blob, functions + 4 * i, target_rva);
        write_u32(blob, name_ptrs + 4 * i, static_cast<std::uint32_t>(base_rva + name_offs[i]));
        write_u16(blob, ordinals + 2 * i, static_cast<std::uint16_t>(i));
        put_bytes(blob, name_offs[i], names[i]);
    }
    return blob;
}

}  // namespace

byte_vector build_minimal_pe(const pe_spec& spec) {
    if (!is_power_of_two(spec.file_alignment) || !is_power_of_two(spec.section_alignment)) {
        fail(pe_error_kind::invalid_spec, "alignments must be powers of two");
    }
    const std::uint32_t fa = spec.file_alignment;
    const std::uint32_t sa = spec.section_alignment;

    std::vector<layout_section> sections;
    for (std::size_t i = 0; i < spec.sections.size(); ++i) {
        const auto& s = spec.sections[i];
        if (s.name.size() > 8) fail(pe_error_kind::invalid_spec, "section name longer than 8 bytes: " + s.name);
        std::uint32_t ch = s.characteristics.value_or(
            i == 0 ? section_flags::cnt_code | section_flags::mem_execute | section_flags::mem_read
                   : section_flags::cnt_initialized_data | section_flags::mem_read);
        sections.push_back({s.name, s.content, ch});
    }
    const bool has_imports = !spec.imports.empty();
    const bool has_exports = !spec.exports.empty();
    const std::size_t total_sections = sections.size() + (has_imports ? 1 : 0) + (has_exports ? 1 : 0);
    if (total_sections + spec.spare_section_slots > 0xFFFF) fail(pe_error_kind::invalid_spec, "too many sections");

    const std::uint32_t lfanew = 0x80;
    const std::uint16_t opt_size = spec.pe32_plus ? 240 : 224;
    const std::size_t table_off = lfanew + 4 + coff_header_size + opt_size;
    const std::size_t table_end = table_off + section_entry_size * (total_sections + spec.spare_section_slots);
    const auto size_of_headers = static_cast<std::uint32_t>(align_up(table_end, fa));

    // Virtual layout for user sections first; synthetic sections follow.
    std::uint32_t va = static_cast<std::uint32_t>(align_up(size_of_headers, sa));
    auto next_va = [&](std::size_t vsize) {
        std::uint32_t here = va;
        va = static_cast<std::uint32_t>(align_up(here + std::max<std::size_t>(vsize, 1), sa));
        return here;
    };
    for (auto& s : sections) s.va = next_va(s.content.size());
    const std::uint32_t first_va = sections.empty() ? 0 : sections.front().va;

    std::uint32_t import_rva = 0, import_size = 0, iat_rva = 0, iat_size = 0;
    if (has_imports) {
        // the blob size does not depend on its base, so build twice
        byte_vector probe = build_import_blob(spec.imports, 0, spec.pe32_plus, iat_rva, iat_size);
        import_rva = next_va(probe.size());
        byte_vector blob = build_import_blob(spec.imports, import_rva, spec.pe32_plus, iat_rva, iat_size);
        import_size = static_cast<std::uint32_t>((spec.imports.size() + 1) * 20);
        sections.push_back({".idata", std::move(blob),
                            section_flags::cnt_initialized_data | section_flags::mem_read | section_flags::mem_write,
                            import_rva});
    }
    std::uint32_t export_rva = 0, export_size = 0;
    if (has_exports) {
        byte_vector probe = build_export_blob(spec.exports, 0, first_va);
        export_rva = next_va(probe.size());
        byte_vector blob = build_export_blob(spec.exports, export_rva, first_va);
        export_size = static_cast<std::uint32_t>(blob.size());
        sections.push_back({".edata", std::move(blob), section_flags::cnt_initialized_data | section_flags::mem_read,
                            export_rva});
    }
    const std::uint32_t size_of_image = va;

    std::uint32_t raw_cursor = size_of_headers;
    std::uint32_t size_of_code = 0, size_of_init = 0;
    for (auto& s : sections) {
        s.raw_size = static_cast<std::uint32_t>(align_up(s.content.size(), fa));
        s.raw_offset = s.raw_size > 0 ? raw_cursor : 0;
        raw_cursor += s.raw_size;
        if (s.characteristics & section_flags::cnt_code) size_of_code += s.raw_size;
        else size_of_init += s.raw_size;
    }

    byte_vector out(raw_cursor, 0);
    out[0] = 'M';
    out[1] = 'Z';
    write_u32(out, lfanew_field, lfanew);
    put_bytes(out, lfanew, std::string_view("PE\0\0", 4));

    const std::size_t coff = lfanew + 4;
    const std::uint16_t machine = spec.pe32_plus && spec.machine == 0x14c ? 0x8664 : spec.machine;
    write_u16(out, coff, machine);
    write_u16(out, coff + 2, static_cast<std::uint16_t>(sections.size()));
    write_u16(out, coff + 16, opt_size);
    write_u16(out, coff + 18, spec.pe32_plus ? 0x0022 : 0x0102);

    const std::size_t opt = coff + coff_header_size;
    write_u16(out, opt, spec.pe32_plus ? optional_magic_pe32_plus : optional_magic_pe32);
    out[opt + 2] = 14;
    write_u32(out, opt + 4, size_of_code);
    write_u32(out, opt + 8, size_of_init);
    write_u32(out, opt + 16, spec.entry_point_rva.value_or(first_va));
    write_u32(out, opt + 20, first_va);
    if (spec.pe32_plus) {
        write_u64(out, opt + 24, 0x140000000ULL);
    } else {
        write_u32(out, opt + 28, 0x400000);
    }
    write_u32(out, opt + 32, sa);
    write_u32(out, opt + 36, fa);
    write_u16(out, opt + 40, 6);
    write_u16(out, opt + 48, 6);
    write_u32(out, opt + 56, size_of_image);
    write_u32(out, opt + 60, size_of_headers);
    write_u16(out, opt + 68, spec.subsystem);
    write_u16(out, opt + 70, spec.dll_characteristics);
    const std::size_t dd = opt + directory_base(spec.pe32_plus ? optional_magic_pe32_plus : optional_magic_pe32);
    if (spec.pe32_plus) {
        write_u64(out, opt + 72, 0x100000);
        write_u64(out, opt + 80, 0x1000);
        write_u64(out, opt + 88, 0x100000);
        write_u64(out, opt + 96, 0x1000);
    } else {
        write_u32(out, opt + 72, 0x100000);
        write_u32(out, opt + 76, 0x1000);
        write_u32(out, opt + 80, 0x100000);
        write_u32(out, opt + 84, 0x1000);
    }
    write_u32(out, dd - 4, 16);
    if (has_exports) {
        write_u32(out, dd + 0, export_rva);
        write_u32(out, dd + 4, export_size);
    }
    if (has_imports) {
        write_u32(out, dd + 8, import_rva);
        write_u32(out, dd + 12, import_size);
        write_u32(out, dd + 8 * 12, iat_rva);
        write_u32(out, dd + 8 * 12 + 4, iat_size);
    }

    for (std::size_t i = 0; i < sections.size(); ++i) {
        const auto& s = sections[i];
        const std::size_t e = table_off + i * section_entry_size;
        put_bytes(out, e, s.name);
        write_u32(out, e + 8, static_cast<std::uint32_t>(s.content.size()));
        write_u32(out, e + 12, s.va);
        write_u32(out, e + 16, s.raw_size);
        write_u32(out, e + 20, s.raw_offset);
        write_u32(out, e + 36, s.characteristics);
        std::copy(s.content.begin(), s.content.end(), out.begin() + s.raw_offset);
    }
    out.insert(out.end(), spec.overlay.begin(), spec.overlay.end());
    return out;
}

namespace {

pe_file parse_or_fail(byte_view bytes) {
    try {
        return parse_pe(bytes);
    } catch (const pe_error& e) {
        throw pe_error(pe_error_kind::parse_failed, std::string("input is not a valid PE: ") + e.what());
    }
}

void shift_file_offset_field(byte_vector& buf, std::size_t field, std::size_t from, std::uint32_t delta) {
    std::uint32_t v = read_u32(buf, field);
    if (v != 0 && v >= from) write_u32(buf, field, v + delta);
}

}  // namespace

byte_vector inject_section(byte_view pe_bytes, const std::string& name, byte_view content,
                           const inject_options& options) {
    const pe_file pe = parse_or_fail(pe_bytes);
    if (name.size() > 8) fail(pe_error_kind::invalid_spec, "section name longer than 8 bytes: " + name);
    const auto& nt = pe.nt();
    if (nt.number_of_sections == 0xFFFF) fail(pe_error_kind::no_header_room, "section count field exhausted");

    const std::uint32_t fa = nt.file_alignment;
    const std::uint32_t sa = nt.section_alignment == 0 ? 0x1000 : nt.section_alignment;
    const std::size_t coff = pe.e_lfanew() + 4;
    const std::size_t opt = coff + coff_header_size;
    const std::size_t dd = opt + directory_base(nt.magic);
    const bool has_security_dir = nt.data_directories.size() > static_cast<std::size_t>(data_directory_index::security);
    const std::size_t security_field = dd + 8 * static_cast<std::size_t>(data_directory_index::security);

    byte_vector out(pe_bytes.begin(), pe_bytes.end());
    std::vector<section_entry> sections = pe.sections();
    const std::size_t table_end = pe.section_table_offset() + sections.size() * section_entry_size;
    const std::size_t new_entry_end = table_end + section_entry_size;

    std::size_t first_raw = std::min<std::size_t>(nt.size_of_headers, out.size());
    bool any_raw = false;
    for (const auto& s : sections) {
        if (s.raw_size == 0) continue;
        first_raw = any_raw ? std::min<std::size_t>(first_raw, s.raw_offset) : s.raw_offset;
        any_raw = true;
    }
    first_raw = std::max(first_raw, table_end);

    std::uint32_t size_of_headers = nt.size_of_headers;
    if (new_entry_end > std::min<std::size_t>(size_of_headers, first_raw)) {
        if (!options.allow_relocation) fail(pe_error_kind::no_header_room, "no slack for a new section entry");
        const std::size_t new_soh = align_up(new_entry_end, fa);
        std::uint32_t delta = 0;
        if (new_soh > first_raw) delta = static_cast<std::uint32_t>(align_up(new_soh - first_raw, fa));
        std::uint32_t lowest_va = 0;
        for (const auto& s : sections) {
            if (s.virtual_address != 0 && (lowest_va == 0 || s.virtual_address < lowest_va)) lowest_va = s.virtual_address;
        }
        if (lowest_va != 0 && new_soh > lowest_va) {
            fail(pe_error_kind::no_header_room, "grown headers would overlap the first section in memory");
        }
        if (delta > 0) {
            out.insert(out.begin() + static_cast<std::ptrdiff_t>(first_raw), delta, 0);
            for (auto& s : sections) {
                if (s.raw_size > 0 && s.raw_offset >= first_raw) s.raw_offset += delta;
            }
            if (has_security_dir) shift_file_offset_field(out, security_field, first_raw, delta);
            shift_file_offset_field(out, coff + 8, first_raw, delta);
        }
        size_of_headers = static_cast<std::uint32_t>(std::max<std::size_t>(size_of_headers, new_soh));
    }
    for (std::size_t i = table_end; i < new_entry_end; ++i) {
        if (out[i] != 0) fail(pe_error_kind::no_header_room, "section table slack is not empty");
    }

    std::size_t last_raw_end = size_of_headers;
    std::uint64_t next_va = align_up(size_of_headers, sa);
    for (const auto& s : sections) {
        if (s.raw_size > 0) last_raw_end = std::max<std::size_t>(last_raw_end, std::size_t{s.raw_offset} + s.raw_size);
        next_va = std::max<std::uint64_t>(next_va, align_up(std::uint64_t{s.virtual_address} +
                                                                std::max(s.virtual_size, s.raw_size), sa));
    }
    const std::size_t insert_at = align_up(last_raw_end, fa);
    if (insert_at > out.size()) out.resize(insert_at, 0);

    section_entry added;
    std::copy(name.begin(), name.end(), added.name.begin());
    added.virtual_size = static_cast<std::uint32_t>(content.size());
    added.virtual_address = static_cast<std::uint32_t>(next_va);
    added.raw_size = static_cast<std::uint32_t>(align_up(content.size(), fa));
    added.raw_offset = added.raw_size > 0 ? static_cast<std::uint32_t>(insert_at) : 0;
    added.characteristics = section_flags::cnt_initialized_data | section_flags::mem_read;

    byte_vector payload(added.raw_size, 0);
    std::copy(content.begin(), content.end(), payload.begin());
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(insert_at), payload.begin(), payload.end());
    if (added.raw_size > 0) {
        if (has_security_dir) shift_file_offset_field(out, security_field, insert_at, added.raw_size);
        shift_file_offset_field(out, coff + 8, insert_at, added.raw_size);
    }

    sections.push_back(added);
    for (std::size_t i = 0; i < sections.size(); ++i) {
        const auto& s = sections[i];
        const std::size_t e = pe.section_table_offset() + i * section_entry_size;
        std::copy(s.name.begin(), s.name.end(), out.begin() + static_cast<std::ptrdiff_t>(e));
        write_u32(out, e + 8, s.virtual_size);
        write_u32(out, e + 12, s.virtual_address);
        write_u32(out, e + 16, s.raw_size);
        write_u32(out, e + 20, s.raw_offset);
        write_u32(out, e + 36, s.characteristics);
    }
    write_u16(out, coff + 2, static_cast<std::uint16_t>(sections.size()));
    write_u32(out, opt + 8, nt.size_of_initialized_data + added.raw_size);
    write_u32(out, opt + 56, static_cast<std::uint32_t>(
                                 align_up(next_va + std::max<std::size_t>(content.size(), 1), sa)));
    write_u32(out, opt + 60, size_of_headers);
    return out;
}

byte_vector append_padding(byte_view pe_bytes, byte_view content) {
    parse_or_fail(pe_bytes);
    byte_vector out;
    out.reserve(pe_bytes.size() + content.size());
    out.insert(out.end(), pe_bytes.begin(), pe_bytes.end());
    out.insert(out.end(), content.begin(), content.end());
    return out;
}

std::vector<section_payload> extract_sections(const pe_file& pe) {
    std::vector<section_payload> out;
    out.reserve(pe.sections().size());
    for (const auto& s : pe.sections()) {
        auto payload = pe.section_payload(s);
        out.push_back({s, byte_vector(payload.begin(), payload.end())});
    }
    return out;
}

}  // namespace chainscan::pe
