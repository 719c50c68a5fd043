#include "lsub/checkpoint.hpp"

#include "lsub/error.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lsub {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t out = 0;
        for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
        return out;
    }
    return v;
}

void write_blob(const std::filesystem::path& path, const ParamVector& p) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (double v : p.values()) {
        const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
        char bytes[8];
        std::memcpy(bytes, &bits, 8);
        out.write(bytes, 8);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

ParamVector read_blob(const std::filesystem::path& path, const SegmentTablePtr& table) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<double> values(table->size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        char bytes[8];
        if (!in.read(bytes, 8)) {
            throw FormatError(path.string() + ": truncated at byte offset " + std::to_string(8 * i));
        }
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes, 8);
        values[i] = std::bit_cast<double>(to_little_endian(bits));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(path.string() + ": trailing data at byte offset " + std::to_string(8 * values.size()));
    }
    return ParamVector(table, std::move(values));
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key,
                           const std::filesystem::path& path) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": missing key '" + key + "'");
    return it->second;
}

std::size_t parse_size(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        auto v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw FormatError("key '" + key + "' is not an unsigned integer: '" + s + "'");
    }
}

} // namespace

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt) {
    if (ckpt.vectors.empty()) throw ConfigError("checkpoint has no parameter vectors");
    for (const auto& v : ckpt.vectors) {
        if (!v.table() || !(*v.table() == *ckpt.spec.table())) {
            throw ConfigError("checkpoint vector does not match network segment table");
        }
    }
    if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());

    std::ostringstream text;
    text << "format = lsub-checkpoint\n";
    text << "version = 1\n";
    text << "network = " << ckpt.spec.to_string() << "\n";
    text << "input_dim = " << ckpt.spec.input_dim() << "\n";
    text << "num_classes = " << ckpt.spec.num_classes() << "\n";
    text << "param_count = " << ckpt.spec.param_count() << "\n";
    const auto& segs = ckpt.spec.table()->segments();
    text << "segments = " << segs.size() << "\n";
    for (std::size_t i = 0; i < segs.size(); ++i) {
        text << "segment." << i << " = " << segs[i].layer_index << ' ' << to_string(segs[i].kind) << ' '
             << segs[i].offset << ' ' << segs[i].length << "\n";
    }
    text << "kind = " << ckpt.kind << "\n";
    text << "vectors = " << ckpt.vectors.size() << "\n";
    const std::string stem = manifest.stem().string();
    for (std::size_t i = 0; i < ckpt.vectors.size(); ++i) {
        const std::string blob = stem + ".v" + std::to_string(i) + ".bin";
        text << "vector." << i << " = " << blob << "\n";
        write_blob(manifest.parent_path() / blob, ckpt.vectors[i]);
    }
    for (const auto& [k, v] : ckpt.extra) text << k << " = " << v << "\n";

    std::ofstream out(manifest, std::ios::trunc);
    if (!out) throw IoError("cannot open " + manifest.string() + " for writing");
    out << text.str();
    if (!out) throw IoError("write failed for " + manifest.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
    auto kv = read_key_value_file(manifest);
    if (require(kv, "format", manifest) != "lsub-checkpoint") {
        throw FormatError(manifest.string() + ": not an lsub checkpoint");
    }
    if (require(kv, "version", manifest) != "1") throw FormatError(manifest.string() + ": unsupported version");
    NetworkSpec spec = NetworkSpec::parse(require(kv, "network", manifest),
                                          parse_size(require(kv, "input_dim", manifest), "input_dim"),
                                          parse_size(require(kv, "num_classes", manifest), "num_classes"));
    if (parse_size(require(kv, "param_count", manifest), "param_count") != spec.param_count()) {
        throw FormatError(manifest.string() + ": param_count does not match network");
    }
    const auto& segs = spec.table()->segments();
    if (parse_size(require(kv, "segments", manifest), "segments") != segs.size()) {
        throw FormatError(manifest.string() + ": segment count does not match network");
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const std::string key = "segment." + std::to_string(i);
        std::istringstream row(require(kv, key, manifest));
        Segment s;
        std::string kind;
        if (!(row >> s.layer_index >> kind >> s.offset >> s.length)) {
            throw FormatError(manifest.string() + ": malformed " + key);
        }
        s.kind = segment_kind_from_string(kind);
        if (!(s == segs[i])) throw FormatError(manifest.string() + ": " + key + " does not match network");
    }

    Checkpoint ckpt{spec, require(kv, "kind", manifest), {}, {}};
    const std::size_t count = parse_size(require(kv, "vectors", manifest), "vectors");
    for (std::size_t i = 0; i < count; ++i) {
        const auto blob = require(kv, "vector." + std::to_string(i), manifest);
        ckpt.vectors.push_back(read_blob(manifest.parent_path() / blob, spec.table()));
    }
    static const std::vector<std::string> fixed = {"format", "version", "network", "input_dim",
                                                   "num_classes", "param_count", "segments", "kind", "vectors"};
    for (const auto& [k, v] : kv) {
        if (std::find(fixed.begin(), fixed.end(), k) != fixed.end()) continue;
        if (k.starts_with("segment.") || k.starts_with("vector.")) continue;
        ckpt.extra[k] = v;
    }
    return ckpt;
}

} // namespace lsub
