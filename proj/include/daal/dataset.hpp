#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "losses.hpp"
#include "numerics.hpp"

namespace daal {

/// Multi-modal Gaussian mixture: each class has M dense sub-clusters spread
/// around a class center, class centers sit on a rotated regular simplex so
/// class_separation is the exact pairwise center distance (random unit
/// directions when input_dim < num_classes).
struct SyntheticSpec {
    std::size_t num_classes = 8;
    std::size_t modes_per_class = 3;
    std::size_t samples_per_class = 250;
    std::size_t input_dim = 16;
    double class_separation = 6.0;
    double mode_spread = 1.5;
    double within_mode_std = 0.5;
    std::uint64_t seed = 1;

    void validate() const {
        if (num_classes < 1 || modes_per_class < 1 || samples_per_class < 1 || input_dim < 1)
            throw ConfigError("synthetic spec: counts must be >= 1");
        if (!(class_separation >= 0.0)) throw ConfigError("synthetic spec: class_separation must be >= 0");
        if (!(mode_spread >= 0.0)) throw ConfigError("synthetic spec: mode_spread must be >= 0");
        if (!(within_mode_std > 0.0)) throw ConfigError("synthetic spec: within_mode_std must be > 0");
    }
};

struct LabeledDataset : EmbeddingBatch {
    std::string provenance;
};

namespace detail {

/// Random orthogonal matrix via Gram-Schmidt over a Gaussian draw.
inline Matrix random_rotation(std::size_t d, Rng& rng) {
    Matrix q(d, d);
    for (std::size_t col = 0; col < d; ++col) {
        Vec v = sample_standard_normal(rng, d);
        for (std::size_t prev = 0; prev < col; ++prev) {
            double proj = 0.0;
            for (std::size_t r = 0; r < d; ++r) proj += v[r] * q(r, prev);
            for (std::size_t r = 0; r < d; ++r) v[r] -= proj * q(r, prev);
        }
        v = normalize(v);
        for (std::size_t r = 0; r < d; ++r) q(r, col) = v[r];
    }
    return q;
}

inline std::vector<Vec> class_centers(const SyntheticSpec& spec, Rng& rng) {
    const std::size_t c = spec.num_classes;
    const std::size_t d = spec.input_dim;
    std::vector<Vec> centers(c, Vec(d, 0.0));
    const double scale = spec.class_separation / std::sqrt(2.0);
    if (d >= c) {
        // Centered standard simplex over the first C coordinates, rotated.
        Matrix q = random_rotation(d, rng);
        for (std::size_t k = 0; k < c; ++k) {
            Vec raw(d, 0.0);
            for (std::size_t j = 0; j < c; ++j) raw[j] = -1.0 / double(c);
            raw[k] += 1.0;
            for (std::size_t r = 0; r < d; ++r) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += q(r, j) * raw[j];
                centers[k][r] = scale * acc;
            }
        }
    } else {
        for (std::size_t k = 0; k < c; ++k) {
            Vec dir = normalize(sample_standard_normal(rng, d));
            for (std::size_t r = 0; r < d; ++r) centers[k][r] = scale * dir[r];
        }
    }
    return centers;
}

}  // namespace detail

inline LabeledDataset generate_multimodal(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t d = spec.input_dim;
    const std::size_t n = spec.num_classes * spec.samples_per_class;

    const std::vector<Vec> centers = detail::class_centers(spec, rng);

    LabeledDataset ds;
    ds.features = Matrix(n, d);
    ds.labels.resize(n);
    std::ostringstream note;
    note << "synthetic C=" << spec.num_classes << " M=" << spec.modes_per_class
         << " n/class=" << spec.samples_per_class << " d=" << d << " seed=" << spec.seed;
    ds.provenance = note.str();

    std::size_t row = 0;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        std::vector<Vec> modes(spec.modes_per_class, Vec(d));
        for (std::size_t m = 0; m < spec.modes_per_class; ++m) {
            for (std::size_t r = 0; r < d; ++r)
                modes[m][r] = centers[k][r] + spec.mode_spread * rng.next_gaussian();
        }
        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
            const Vec& mode = modes[s % spec.modes_per_class];
            for (std::size_t r = 0; r < d; ++r)
                ds.features(row, r) = mode[r] + spec.within_mode_std * rng.next_gaussian();
            ds.labels[row] = int(k);
        }
    }
    return ds;
}

/// Per-class proportional split. Every class keeps at least one sample on
/// each side; classes with fewer than two samples cannot be split.
inline std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& ds,
                                                                  double test_fraction,
                                                                  std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("stratified_split: test_fraction must be in (0, 1)");
    const std::size_t d = ds.dim();

    std::size_t num_classes = 0;
    for (int y : ds.labels) {
        if (y < 0) throw DomainError("stratified_split: negative label");
        num_classes = std::max(num_classes, std::size_t(y) + 1);
    }
    std::vector<std::vector<std::size_t>> per_class(num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        per_class[std::size_t(ds.labels[i])].push_back(i);

    Rng rng = Rng(seed).substream(11);
    std::vector<std::size_t> test_idx, train_idx;
    for (std::size_t k = 0; k < num_classes; ++k) {
        auto& idx = per_class[k];
        if (idx.empty()) continue;
        if (idx.size() < 2)
            throw ConfigError("stratified_split: class " + std::to_string(k) +
                              " has fewer than two samples");
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.next_index(i)]);
        std::size_t n_test = std::size_t(std::llround(test_fraction * double(idx.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + std::ptrdiff_t(n_test));
        train_idx.insert(train_idx.end(), idx.begin() + std::ptrdiff_t(n_test), idx.end());
    }
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());

    auto gather = [&](const std::vector<std::size_t>& rows, const char* tag) {
        LabeledDataset out;
        out.features = Matrix(rows.size(), d);
        out.labels.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.features.set_row(i, ds.features.row_vec(rows[i]));
            out.labels[i] = ds.labels[rows[i]];
        }
        out.provenance = ds.provenance + " | " + tag;
        return out;
    };
    return {gather(train_idx, "train"), gather(test_idx, "test")};
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double_field(const std::string& field, std::size_t line) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw ParseError("csv: line " + std::to_string(line) + ": non-numeric value '" + field + "'");
    if (!std::isfinite(v))
        throw ParseError("csv: line " + std::to_string(line) + ": non-finite value '" + field + "'");
    return v;
}

/// CSV feature file: UTF-8, header "label,f0,...,f{d-1}", one sample per row,
/// non-negative integer label first, values in shortest round-trip form.
inline void save_features_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("csv: cannot open '" + path + "' for writing");
    out << "label";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (std::size_t j = 0; j < ds.dim(); ++j) out << ',' << format_double(ds.features(i, j));
        out << '\n';
    }
    if (!out) throw IoError("csv: write failed for '" + path + "'");
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

inline LabeledDataset load_features_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("csv: cannot open '" + path + "' for reading");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t nl = content.find('\n', start);
        if (nl == std::string::npos) nl = content.size();
        std::string line = content.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = nl + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ParseError("csv: empty file '" + path + "'");

    const auto header = split_fields(lines[0]);
    if (header.empty() || header[0] != "label")
        throw ParseError("csv: line 1: header must start with 'label'");
    const std::size_t d = header.size() - 1;
    if (d == 0) throw ParseError("csv: line 1: header has no feature columns");
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j + 1] != "f" + std::to_string(j))
            throw ParseError("csv: line 1: expected column 'f" + std::to_string(j) + "', got '" +
                             header[j + 1] + "'");
    }
    if (lines.size() < 2) throw ParseError("csv: no data rows in '" + path + "'");

    LabeledDataset ds;
    ds.features = Matrix(lines.size() - 1, d);
    ds.labels.resize(lines.size() - 1);
    ds.provenance = "csv:" + path;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (lines[i].empty())
            throw ParseError("csv: line " + std::to_string(line_no) + ": empty row");
        const auto fields = split_fields(lines[i]);
        if (fields.size() != d + 1)
            throw ParseError("csv: line " + std::to_string(line_no) + ": expected " +
                             std::to_string(d + 1) + " fields, got " + std::to_string(fields.size()));
        long long label = 0;
        {
            const char* begin = fields[0].data();
            const char* end = begin + fields[0].size();
            const auto res = std::from_chars(begin, end, label);
            if (res.ec != std::errc() || res.ptr != end || label < 0)
                throw ParseError("csv: line " + std::to_string(line_no) +
                                 ": label must be a non-negative integer, got '" + fields[0] + "'");
        }
        ds.labels[i - 1] = int(label);
        for (std::size_t j = 0; j < d; ++j)
            ds.features(i - 1, j) = parse_double_field(fields[j + 1], line_no);
    }
    return ds;
}

}  // namespace daal
