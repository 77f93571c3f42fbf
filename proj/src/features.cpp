#include "chainscan/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

namespace chainscan::features {

namespace {

constexpr std::size_t entropy_bins = 16;
constexpr std::size_t value_bins = 16;
constexpr std::size_t printable_bins = 96;
constexpr std::size_t machine_buckets = 10;
constexpr std::size_t subsystem_buckets = 10;

constexpr std::array<std::pair<std::uint32_t, const char*>, 6> section_flag_names{{
    {pe::section_flags::cnt_code, "code"},
    {pe::section_flags::cnt_initialized_data, "initialized_data"},
    {pe::section_flags::cnt_uninitialized_data, "uninitialized_data"},
    {pe::section_flags::mem_execute, "execute"},
    {pe::section_flags::mem_read, "read"},
    {pe::section_flags::mem_write, "write"},
}};

std::string machine_name(std::uint16_t m) {
    switch (m) {
        case 0x14c: return "i386";
        case 0x8664: return "amd64";
        case 0x1c0: return "arm";
        case 0x1c4: return "armnt";
        case 0xaa64: return "arm64";
        case 0x200: return "ia64";
        default: {
            char buf[24];
            std::snprintf(buf, sizeof buf, "machine_0x%x", m);
            return buf;
        }
    }
}

std::string subsystem_name(std::uint16_t s) {
    switch (s) {
        case 1: return "native";
        case 2: return "windows_gui";
        case 3: return "windows_cui";
        case 9: return "windows_ce_gui";
        case 10: return "efi_application";
        case 14: return "xbox";
        default: return "subsystem_" + std::to_string(s);
    }
}

std::size_t count_occurrences(byte_view data, std::string_view needle, bool nocase) {
    if (needle.empty() || needle.size() > data.size()) return 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i + needle.size() <= data.size(); ++i) {
        bool ok = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            auto d = static_cast<char>(data[i + j]);
            auto c = needle[j];
            if (nocase) {
                if (d >= 'A' && d <= 'Z') d = static_cast<char>(d + 32);
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
            }
            if (d != c) {
                ok = false;
                break;
            }
        }
        n += ok;
    }
    return n;
}

}  // namespace

std::size_t feature_config::dimension() const noexcept {
    return histogram_dim + entropy_histogram_dim + string_dim + general_dim + header_dim + sections_dim() +
           imports_dim() + export_buckets;
}

std::string feature_config::fingerprint() const {
    std::string desc = "fnv1a64;seed=" + std::to_string(hash_seed) + ";window=" + std::to_string(entropy_window) +
                       ";step=" + std::to_string(entropy_step) + ";minstr=" + std::to_string(min_string_length) +
                       ";lib=" + std::to_string(import_library_buckets) +
                       ";fn=" + std::to_string(import_function_buckets) + ";exp=" + std::to_string(export_buckets) +
                       ";sec=" + std::to_string(section_buckets);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(desc)));
    return buf;
}

void feature_config::validate() const {
    if (entropy_window == 0 || entropy_step == 0) throw std::invalid_argument("entropy window and step must be >= 1");
    if (import_library_buckets == 0 || import_function_buckets == 0 || export_buckets == 0 || section_buckets == 0) {
        throw std::invalid_argument("bucket counts must be >= 1");
    }
}

void to_json(nlohmann::json& j, const feature_config& c) {
    j = nlohmann::json{{"entropy_window", c.entropy_window},
                       {"entropy_step", c.entropy_step},
                       {"min_string_length", c.min_string_length},
                       {"import_library_buckets", c.import_library_buckets},
                       {"import_function_buckets", c.import_function_buckets},
                       {"export_buckets", c.export_buckets},
                       {"section_buckets", c.section_buckets},
                       {"hash_seed", c.hash_seed},
                       {"lenient", c.lenient}};
}

void from_json(const nlohmann::json& j, feature_config& c) {
    c.entropy_window = j.value("entropy_window", c.entropy_window);
    c.entropy_step = j.value("entropy_step", c.entropy_step);
    c.min_string_length = j.value("min_string_length", c.min_string_length);
    c.import_library_buckets = j.value("import_library_buckets", c.import_library_buckets);
    c.import_function_buckets = j.value("import_function_buckets", c.import_function_buckets);
    c.export_buckets = j.value("export_buckets", c.export_buckets);
    c.section_buckets = j.value("section_buckets", c.section_buckets);
    c.hash_seed = j.value("hash_seed", c.hash_seed);
    c.lenient = j.value("lenient", c.lenient);
    c.validate();
}

std::span<const double> feature_vector::group(std::string_view name) const {
    for (const auto& g : groups) {
        if (g.name == name) return std::span<const double>(values).subspan(g.offset, g.length);
    }
    throw std::out_of_range("unknown feature group " + std::string(name));
}

std::vector<double> byte_histogram(byte_view data) {
    std::array<std::uint64_t, 256> counts{};
    for (auto b : data) ++counts[b];
    std::vector<double> out(histogram_dim, 0.0);
    if (data.empty()) return out;
    const double n = static_cast<double>(data.size());
    for (std::size_t i = 0; i < 256; ++i) out[i] = static_cast<double>(counts[i]) / n;
    return out;
}

double shannon_entropy(byte_view data) {
    if (data.empty()) return 0.0;
    std::array<std::uint64_t, 256> counts{};
    for (auto b : data) ++counts[b];
    const double n = static_cast<double>(data.size());
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

std::size_t entropy_bin(double entropy_bits) {
    // half-bit bins; the tolerance absorbs rounding at exact bin edges
    auto bin = static_cast<long>(std::floor(entropy_bits * 2.0 + 1e-9));
    return static_cast<std::size_t>(std::clamp<long>(bin, 0, static_cast<long>(entropy_bins - 1)));
}

std::vector<double> byte_entropy_histogram(byte_view data, std::size_t window, std::size_t step) {
    if (window == 0 || step == 0) throw std::invalid_argument("window and step must be >= 1");
    std::vector<double> out(entropy_histogram_dim, 0.0);
    const std::size_t n = data.size();
    if (n == 0) return out;

    // x*log2(x) for every count a window can hold
    std::vector<double> xlogx(std::min(window, n) + 1, 0.0);
    for (std::size_t c = 2; c < xlogx.size(); ++c) xlogx[c] = static_cast<double>(c) * std::log2(static_cast<double>(c));

    std::array<std::uint64_t, entropy_bins * value_bins> mass{};
    std::array<std::uint32_t, 256> counts{};
    std::size_t lo = 0, hi = 0;  // counts cover data[lo, hi)
    std::uint64_t total = 0;

    // with step > window the next start can land past the data; the last window is then the final one
    for (std::size_t start = 0; start < n; start += step) {
        const std::size_t end = std::min(start + window, n);
        if (start >= hi || start < lo) {
            counts.fill(0);
            for (std::size_t i = start; i < end; ++i) ++counts[data[i]];
        } else {
            for (std::size_t i = lo; i < start; ++i) --counts[data[i]];
            for (std::size_t i = hi; i < end; ++i) ++counts[data[i]];
        }
        lo = start;
        hi = end;

        const std::size_t len = end - start;
        double sum = 0.0;
        std::array<std::uint32_t, value_bins> coarse{};
        for (std::size_t v = 0; v < 256; ++v) {
            sum += xlogx[counts[v]];
            coarse[v >> 4] += counts[v];
        }
        const double h = std::log2(static_cast<double>(len)) - sum / static_cast<double>(len);
        const std::size_t row = entropy_bin(h);
        for (std::size_t v = 0; v < value_bins; ++v) mass[row * value_bins + v] += coarse[v];
        total += len;
        if (end == n) break;
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(mass[i]) / static_cast<double>(total);
    return out;
}

std::vector<double> string_features(byte_view data, std::size_t min_length) {
    std::vector<double> out(string_dim, 0.0);
    std::array<std::uint64_t, printable_bins> dist{};
    std::uint64_t strings = 0, chars = 0;

    auto flush = [&](std::size_t begin, std::size_t end) {
        if (end - begin < min_length) return;
        ++strings;
        chars += end - begin;
        for (std::size_t i = begin; i < end; ++i) ++dist[data[i] - 0x20];
    };
    std::size_t run = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i] < 0x20 || data[i] > 0x7E) {
            flush(run, i);
            run = i + 1;
        }
    }
    flush(run, data.size());

    out[0] = static_cast<double>(strings);
    out[1] = strings ? static_cast<double>(chars) / static_cast<double>(strings) : 0.0;
    double h = 0.0;
    for (std::size_t i = 0; i < printable_bins; ++i) {
        if (chars == 0) break;
        double p = static_cast<double>(dist[i]) / static_cast<double>(chars);
        out[2 + i] = p;
        if (p > 0) h -= p * std::log2(p);
    }
    out[98] = h;
    out[99] = static_cast<double>(count_occurrences(data, "c:\\", true));
    out[100] = static_cast<double>(count_occurrences(data, "http://", false));
    out[101] = static_cast<double>(count_occurrences(data, "https://", false));
    out[102] = static_cast<double>(count_occurrences(data, "HKEY_", false));
    out[103] = static_cast<double>(count_occurrences(data, "MZ", false));
    return out;
}

parsed_groups parsed_features(const pe::pe_file& pe, const feature_config& config) {
    using pe::data_directory_index;
    const auto& nt = pe.nt();
    const std::uint64_t seed = config.hash_seed;
    parsed_groups g;

    std::size_t imported_functions = 0;
    for (const auto& lib : pe.imports()) imported_functions += lib.functions.size();
    auto present = [&](data_directory_index idx) { return pe.directory(idx).rva != 0 ? 1.0 : 0.0; };
    g.general = {static_cast<double>(pe.raw_size()),
                 static_cast<double>(nt.size_of_image),
                 static_cast<double>(pe.sections().size()),
                 static_cast<double>(imported_functions),
                 static_cast<double>(pe.exports().size()),
                 present(data_directory_index::debug),
                 present(data_directory_index::base_relocations),
                 present(data_directory_index::resources),
                 present(data_directory_index::security),
                 present(data_directory_index::tls)};

    g.header.assign(header_dim, 0.0);
    std::size_t h = 0;
    g.header[h + hash_bucket(machine_name(nt.machine), machine_buckets, seed)] = 1.0;
    h += machine_buckets;
    g.header[h + hash_bucket(subsystem_name(nt.subsystem), subsystem_buckets, seed)] = 1.0;
    h += subsystem_buckets;
    for (std::size_t bit = 0; bit < 16; ++bit) g.header[h + bit] = (nt.characteristics >> bit) & 1U;
    h += 16;
    for (std::size_t bit = 0; bit < 16; ++bit) g.header[h + bit] = (nt.dll_characteristics >> bit) & 1U;
    h += 16;
    g.header[h + (nt.is_pe32_plus() ? 1 : 0)] = 1.0;
    h += 2;
    for (double v : {nt.entry_point_rva != 0 ? 1.0 : 0.0, static_cast<double>(nt.entry_point_rva),
                     static_cast<double>(nt.size_of_code), static_cast<double>(nt.size_of_initialized_data),
                     static_cast<double>(nt.size_of_uninitialized_data), static_cast<double>(nt.size_of_image),
                     static_cast<double>(nt.size_of_headers), static_cast<double>(nt.file_alignment),
                     static_cast<double>(nt.section_alignment), static_cast<double>(nt.timestamp)}) {
        g.header[h++] = v;
    }

    const std::size_t nb = config.section_buckets;
    g.sections.assign(config.sections_dim(), 0.0);
    auto* totals = g.sections.data();
    auto* sizes = totals + section_totals_dim;
    auto* vsizes = sizes + nb;
    auto* entropies = vsizes + nb;
    auto* flags = entropies + nb;
    for (const auto& s : pe.sections()) {
        const std::string name = s.name_string();
        totals[0] += 1;
        totals[1] += s.raw_size == 0;
        totals[2] += name.empty();
        bool rx = (s.characteristics & pe::section_flags::mem_read) && (s.characteristics & pe::section_flags::mem_execute);
        totals[3] += rx;
        totals[4] += (s.characteristics & pe::section_flags::mem_write) != 0;
        const std::size_t b = hash_bucket(name, nb, seed);
        sizes[b] += s.raw_size;
        vsizes[b] += s.virtual_size;
        entropies[b] += shannon_entropy(pe.section_payload(s));
        for (const auto& [bit, flag] : section_flag_names) {
            if (s.characteristics & bit) flags[hash_bucket(name + ":" + flag, nb, seed)] += 1;
        }
    }

    g.imports.assign(config.imports_dim(), 0.0);
    std::set<std::string> libraries;
    for (const auto& lib : pe.imports()) {
        const std::string lname = ascii_lower(lib.library);
        if (libraries.insert(lname).second) g.imports[hash_bucket(lname, config.import_library_buckets, seed)] += 1;
        for (const auto& fn : lib.functions) {
            g.imports[config.import_library_buckets +
                      hash_bucket(lname + ":" + fn, config.import_function_buckets, seed)] += 1;
        }
    }

    g.exports.assign(config.export_buckets, 0.0);
    for (const auto& name : pe.exports()) g.exports[hash_bucket(name, config.export_buckets, seed)] += 1;
    return g;
}

feature_vector extract_features(byte_view data, const feature_config& config) {
    config.validate();
    std::optional<parsed_groups> parsed;
    try {
        const pe::pe_file pe = pe::parse_pe(data);
        parsed = parsed_features(pe, config);
    } catch (const pe::pe_error& e) {
        if (!config.lenient) {
            throw feature_extraction_error(e.kind(), std::string("feature extraction failed: ") + e.what());
        }
    }
    if (!parsed) {
        parsed = parsed_groups{std::vector<double>(general_dim, 0.0), std::vector<double>(header_dim, 0.0),
                               std::vector<double>(config.sections_dim(), 0.0),
                               std::vector<double>(config.imports_dim(), 0.0),
                               std::vector<double>(config.export_buckets, 0.0)};
    }

    feature_vector v;
    v.values.reserve(config.dimension());
    auto append = [&](const char* name, const std::vector<double>& part) {
        v.groups.push_back({name, v.values.size(), part.size()});
        v.values.insert(v.values.end(), part.begin(), part.end());
    };
    append("byte_histogram", byte_histogram(data));
    append("byte_entropy_histogram", byte_entropy_histogram(data, config.entropy_window, config.entropy_step));
    append("strings", string_features(data, config.min_string_length));
    append("general", parsed->general);
    append("header", parsed->header);
    append("sections", parsed->sections);
    append("imports", parsed->imports);
    append("exports", parsed->exports);
    return v;
}

nlohmann::json to_json(const feature_vector& v, const feature_config& config) {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& g : v.groups) {
        auto span = v.group(g.name);
        groups[g.name] = std::vector<double>(span.begin(), span.end());
    }
    return nlohmann::json{{"schema_version", 1},
                          {"dimension", v.dimension()},
                          {"feature_fingerprint", config.fingerprint()},
                          {"groups", groups}};
}

}  // namespace chainscan::features
