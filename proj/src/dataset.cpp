#include "chainscan/dataset.hpp"

#include <fstream>
#include <sstream>

namespace chainscan {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string relative_to(const std::filesystem::path& base, const std::filesystem::path& p) {
    std::error_code ec;
    auto rel = std::filesystem::relative(p, base, ec);
    if (ec || rel.empty() || *rel.begin() == "..") return p.generic_string();
    return rel.generic_string();
}

}  // namespace

const char* to_string(ground_truth g) { return g == ground_truth::malware ? "malware" : "benign"; }

std::vector<labeled_sample> load_manifest(const std::filesystem::path& manifest) {
    std::string text;
    try {
        text = read_text_file(manifest);
    } catch (const std::exception& e) {
        throw manifest_error(e.what());
    }
    const auto base = manifest.parent_path();
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<labeled_sample> out;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        auto where = [&] { return manifest.string() + ":" + std::to_string(line_no) + ": "; };
        if (!header_seen) {
            if (cols.size() < 4 || cols[0] != "path" || cols[1] != "sha256" || cols[2] != "label" ||
                cols[3] != "family") {
                throw manifest_error(where() + "expected header path,sha256,label,family[,report_path]");
            }
            header_seen = true;
            continue;
        }
        if (cols.size() < 4 || cols.size() > 5) throw manifest_error(where() + "expected 4 or 5 columns");
        labeled_sample s;
        s.path = resolve(base, cols[0]);
        s.sha256 = ascii_lower(cols[1]);
        if (cols[2] == "malware") {
            s.truth = ground_truth::malware;
        } else if (cols[2] == "benign") {
            s.truth = ground_truth::benign;
        } else {
            throw manifest_error(where() + "label must be malware or benign");
        }
        s.family = cols[3];
        if (cols.size() == 5 && !cols[4].empty()) {
            s.report_path = resolve(base, cols[4]);
        } else {
            auto sidecar = s.path;
            sidecar += ".report.json";
            std::error_code ec;
            if (std::filesystem::exists(sidecar, ec)) s.report_path = sidecar;
        }
        out.push_back(std::move(s));
    }
    if (!header_seen) throw manifest_error(manifest.string() + ": empty manifest");
    return out;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<labeled_sample>& samples) {
    const auto base = manifest.parent_path();
    std::ostringstream out;
    out << "path,sha256,label,family,report_path\n";
    for (const auto& s : samples) {
        out << relative_to(base, s.path) << ',' << s.sha256 << ',' << to_string(s.truth) << ',' << s.family << ',';
        if (s.report_path) out << relative_to(base, *s.report_path);
        out << '\n';
    }
    const auto text = out.str();
    write_file(manifest, as_bytes(text));
}

sample_input load_sample(const labeled_sample& s, bool verify_hash) {
    sample_input in;
    in.id = s.id();
    in.bytes = read_file(s.path);
    in.sha256 = s.sha256.empty() ? sha256_hex(in.bytes) : s.sha256;
    if (verify_hash && sha256_hex(in.bytes) != s.sha256) {
        throw std::runtime_error(s.path.string() + ": sha256 mismatch");
    }
    in.report_path = s.report_path;
    return in;
}

}  // namespace chainscan
