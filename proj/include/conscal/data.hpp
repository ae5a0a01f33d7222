#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "conscal/error.hpp"
#include "conscal/rng.hpp"

namespace conscal {

/// N x K logits (row-major, float32 as stored on disk) with one label per row.
class LogitSet {
  public:
    LogitSet() = default;

    LogitSet(std::size_t n, std::size_t k, std::vector<float> logits, std::vector<std::uint32_t> labels)
        : n_(n), k_(k), logits_(std::move(logits)), labels_(std::move(labels)) {
        validate();
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] std::size_t num_classes() const noexcept { return k_; }
    [[nodiscard]] std::span<const float> row(std::size_t i) const noexcept {
        return {logits_.data() + i * k_, k_};
    }
    [[nodiscard]] std::uint32_t label(std::size_t i) const noexcept { return labels_[i]; }
    [[nodiscard]] const std::vector<float>& logits() const noexcept { return logits_; }
    [[nodiscard]] const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }

    /// Rows `indices` in the given order.
    [[nodiscard]] LogitSet subset(std::span<const std::size_t> indices) const {
        std::vector<float> z;
        std::vector<std::uint32_t> y;
        z.reserve(indices.size() * k_);
        y.reserve(indices.size());
        for (std::size_t i : indices) {
            if (i >= n_) {
                throw Error(ErrorKind::IndexOutOfRange, "subset index " + std::to_string(i));
            }
            auto r = row(i);
            z.insert(z.end(), r.begin(), r.end());
            y.push_back(labels_[i]);
        }
        return {indices.size(), k_, std::move(z), std::move(y)};
    }

    friend bool operator==(const LogitSet& a, const LogitSet& b) noexcept {
        if (a.n_ != b.n_ || a.k_ != b.k_ || a.labels_ != b.labels_) {
            return false;
        }
        // Bitwise comparison so that -0.0f and 0.0f are distinguished.
        for (std::size_t i = 0; i < a.logits_.size(); ++i) {
            if (std::bit_cast<std::uint32_t>(a.logits_[i]) != std::bit_cast<std::uint32_t>(b.logits_[i])) {
                return false;
            }
        }
        return true;
    }

  private:
    void validate() const {
        if (n_ < 1) {
            throw Error(ErrorKind::MalformedFile, "logit set needs at least one row");
        }
        if (k_ < 2) {
            throw Error(ErrorKind::MalformedFile, "logit set needs at least two classes");
        }
        if (logits_.size() != n_ * k_ || labels_.size() != n_) {
            throw Error(ErrorKind::MalformedFile, "logit/label arrays do not match N x K");
        }
        for (float v : logits_) {
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::NonFiniteLogit, "logit is NaN or infinite");
            }
        }
        for (std::size_t i = 0; i < n_; ++i) {
            if (labels_[i] >= k_) {
                throw Error(ErrorKind::LabelOutOfRange, "row " + std::to_string(i) + " has label " +
                                                            std::to_string(labels_[i]) + " with K=" +
                                                            std::to_string(k_));
            }
        }
    }

    std::size_t n_ = 0;
    std::size_t k_ = 0;
    std::vector<float> logits_;
    std::vector<std::uint32_t> labels_;
};

/// N x K row-stochastic confidences with labels.
class ProbSet {
  public:
    static constexpr double kRowSumTolerance = 1e-9;

    ProbSet() = default;

    ProbSet(std::size_t n, std::size_t k, std::vector<double> probs, std::vector<std::uint32_t> labels)
        : n_(n), k_(k), probs_(std::move(probs)), labels_(std::move(labels)) {
        validate();
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] std::size_t num_classes() const noexcept { return k_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
        return {probs_.data() + i * k_, k_};
    }
    [[nodiscard]] std::uint32_t label(std::size_t i) const noexcept { return labels_[i]; }
    [[nodiscard]] const std::vector<double>& probs() const noexcept { return probs_; }
    [[nodiscard]] const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }

  private:
    void validate() const {
        if (n_ < 1 || k_ < 2 || probs_.size() != n_ * k_ || labels_.size() != n_) {
            throw Error(ErrorKind::InvalidArgument, "probability matrix does not match N x K");
        }
        for (std::size_t i = 0; i < n_; ++i) {
            if (labels_[i] >= k_) {
                throw Error(ErrorKind::LabelOutOfRange, "row " + std::to_string(i));
            }
            double sum = 0.0;
            for (double p : row(i)) {
                if (!(p >= 0.0 && p <= 1.0)) {
                    throw Error(ErrorKind::InvalidArgument, "probability outside [0,1] in row " + std::to_string(i));
                }
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance) {
                throw Error(ErrorKind::InvalidArgument, "row " + std::to_string(i) + " does not sum to 1");
            }
        }
    }

    std::size_t n_ = 0;
    std::size_t k_ = 0;
    std::vector<double> probs_;
    std::vector<std::uint32_t> labels_;
};

/// Index of the largest entry; ties go to the lowest index.
template <class T>
[[nodiscard]] std::size_t argmax(std::span<const T> v) noexcept {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
        if (v[k] > v[best]) {
            best = k;
        }
    }
    return best;
}

namespace data {

enum class Format { Binary, Csv };

inline Format parse_format(std::string_view name) {
    if (name == "clb1" || name == "binary" || name == "bin") {
        return Format::Binary;
    }
    if (name == "csv") {
        return Format::Csv;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown format '" + std::string(name) + "'");
}

/// csv for *.csv, binary otherwise.
inline Format format_from_path(std::string_view path) {
    return path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? Format::Csv : Format::Binary;
}

inline constexpr std::array<char, 4> kLogitMagic{'C', 'L', 'B', '1'};
// Probabilities reuse the logit layout under a distinct magic.
inline constexpr std::array<char, 4> kProbMagic{'C', 'L', 'P', '1'};
inline constexpr std::string_view kProbCsvFlag = "# kind=probs";

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
    }
}

inline std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
    }
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoFailure, "cannot open '" + path + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::IoFailure, "cannot open '" + path + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
        throw Error(ErrorKind::IoFailure, "write to '" + path + "' failed");
    }
}

inline std::string encode_binary(const std::array<char, 4>& magic, std::size_t n, std::size_t k,
                                  std::span<const float> values, std::span<const std::uint32_t> labels) {
    std::string out(magic.begin(), magic.end());
    out.reserve(12 + 4 * (values.size() + labels.size()));
    put_u32(out, static_cast<std::uint32_t>(n));
    put_u32(out, static_cast<std::uint32_t>(k));
    for (float v : values) {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    for (std::uint32_t y : labels) {
        put_u32(out, y);
    }
    return out;
}

struct RawTable {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<float> values;
    std::vector<std::uint32_t> labels;
};

inline RawTable decode_binary(std::string_view bytes, const std::array<char, 4>& magic) {
    if (bytes.size() < 12 || !std::equal(magic.begin(), magic.end(), bytes.begin())) {
        throw Error(ErrorKind::MalformedFile, "bad magic, expected " + std::string(magic.begin(), magic.end()));
    }
    RawTable t;
    t.n = get_u32(bytes, 4);
    t.k = get_u32(bytes, 8);
    const std::uint64_t expected = 12 + 4ULL * (static_cast<std::uint64_t>(t.n) * t.k + t.n);
    if (bytes.size() != expected) {
        throw Error(ErrorKind::MalformedFile, "file size " + std::to_string(bytes.size()) +
                                                  " does not match N=" + std::to_string(t.n) +
                                                  ", K=" + std::to_string(t.k));
    }
    t.values.resize(t.n * t.k);
    std::size_t off = 12;
    for (auto& v : t.values) {
        v = std::bit_cast<float>(get_u32(bytes, off));
        off += 4;
    }
    t.labels.resize(t.n);
    for (auto& y : t.labels) {
        y = get_u32(bytes, off);
        off += 4;
    }
    return t;
}

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

template <class T>
std::string encode_csv(bool probs_flag, std::size_t n, std::size_t k, std::span<const T> values,
                       std::span<const std::uint32_t> labels) {
    std::string out;
    if (probs_flag) {
        out.append(kProbCsvFlag).push_back('\n');
    }
    for (std::size_t j = 0; j < k; ++j) {
        out += "z" + std::to_string(j) + ",";
    }
    out += "label\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            out += format_real(static_cast<double>(values[i * k + j]));
            out.push_back(',');
        }
        out += std::to_string(labels[i]);
        out.push_back('\n');
    }
    return out;
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

struct CsvTable {
    bool probs_flag = false;
    std::size_t k = 0;
    std::vector<double> values;
    std::vector<std::uint32_t> labels;
};

inline CsvTable decode_csv(const std::string& text) {
    std::stringstream in(text);
    std::string line;
    CsvTable t;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (!line.empty()) {
                return true;
            }
        }
        return false;
    };
    if (!next_line()) {
        throw Error(ErrorKind::MalformedFile, "empty CSV");
    }
    if (line == kProbCsvFlag) {
        t.probs_flag = true;
        if (!next_line()) {
            throw Error(ErrorKind::MalformedFile, "missing CSV header");
        }
    }
    const auto header = split_fields(line);
    if (header.size() < 3 || header.back() != "label") {
        throw Error(ErrorKind::MalformedFile, "CSV header must be z0,...,z{K-1},label");
    }
    t.k = header.size() - 1;
    for (std::size_t j = 0; j < t.k; ++j) {
        if (header[j] != "z" + std::to_string(j)) {
            throw Error(ErrorKind::MalformedFile, "unexpected CSV column '" + header[j] + "'");
        }
    }
    std::size_t row = 0;
    while (next_line()) {
        const auto fields = split_fields(line);
        if (fields.size() != t.k + 1) {
            throw Error(ErrorKind::MalformedFile, "CSV row " + std::to_string(row) + " has " +
                                                      std::to_string(fields.size()) + " fields");
        }
        for (std::size_t j = 0; j < t.k; ++j) {
            const char* begin = fields[j].c_str();
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin || *end != '\0') {
                throw Error(ErrorKind::MalformedFile, "unparsable value '" + fields[j] + "'");
            }
            t.values.push_back(v);
        }
        const std::string& lab = fields[t.k];
        if (!lab.empty() && lab[0] == '-') {
            throw Error(ErrorKind::LabelOutOfRange, "negative label in CSV row " + std::to_string(row));
        }
        const char* begin = lab.c_str();
        char* end = nullptr;
        const unsigned long long y = std::strtoull(begin, &end, 10);
        if (end == begin || *end != '\0') {
            throw Error(ErrorKind::MalformedFile, "unparsable label '" + lab + "'");
        }
        if (y >= t.k) {
            throw Error(ErrorKind::LabelOutOfRange, "CSV row " + std::to_string(row) + " has label " + lab);
        }
        t.labels.push_back(static_cast<std::uint32_t>(y));
        ++row;
    }
    if (row == 0) {
        throw Error(ErrorKind::MalformedFile, "CSV has no data rows");
    }
    return t;
}

}  // namespace detail

/// Reads a logit set in CLB1 binary or CSV form; every LogitSet invariant is checked.
inline LogitSet load(const std::string& path, Format format) {
    const std::string bytes = detail::read_file(path);
    if (format == Format::Binary) {
        auto t = detail::decode_binary(bytes, kLogitMagic);
        return {t.n, t.k, std::move(t.values), std::move(t.labels)};
    }
    auto t = detail::decode_csv(bytes);
    if (t.probs_flag) {
        throw Error(ErrorKind::MalformedFile, "'" + path + "' holds probabilities, not logits");
    }
    std::vector<float> z(t.values.begin(), t.values.end());
    return {t.labels.size(), t.k, std::move(z), std::move(t.labels)};
}

inline LogitSet load(const std::string& path) { return load(path, format_from_path(path)); }

inline void save(const LogitSet& set, const std::string& path, Format format) {
    const std::string bytes =
        format == Format::Binary
            ? detail::encode_binary(kLogitMagic, set.size(), set.num_classes(), set.logits(), set.labels())
            : detail::encode_csv<float>(false, set.size(), set.num_classes(), set.logits(), set.labels());
    detail::write_file(path, bytes);
}

/// Probabilities go in the logit slots; the binary form stores float32 under magic CLP1.
inline void save(const ProbSet& set, const std::string& path, Format format) {
    std::string bytes;
    if (format == Format::Binary) {
        std::vector<float> p(set.probs().begin(), set.probs().end());
        bytes = detail::encode_binary(kProbMagic, set.size(), set.num_classes(), p, set.labels());
    } else {
        bytes = detail::encode_csv<double>(true, set.size(), set.num_classes(), set.probs(), set.labels());
    }
    detail::write_file(path, bytes);
}

/// Raw probability table as written by save(ProbSet). Rows are not renormalized.
inline detail::CsvTable load_probs_table(const std::string& path, Format format) {
    const std::string bytes = detail::read_file(path);
    if (format == Format::Binary) {
        auto t = detail::decode_binary(bytes, kProbMagic);
        return {true, t.k, std::vector<double>(t.values.begin(), t.values.end()), std::move(t.labels)};
    }
    auto t = detail::decode_csv(bytes);
    if (!t.probs_flag) {
        throw Error(ErrorKind::MalformedFile, "'" + path + "' lacks the kind=probs flag");
    }
    return t;
}

struct SplitSpec {
    double validation_fraction = 0.2;
    std::uint64_t shuffle_seed = 0;
};

struct SplitResult {
    LogitSet validation;
    LogitSet test;
    std::vector<std::size_t> validation_rows;
    std::vector<std::size_t> test_rows;
};

/*!
 * Fisher-Yates permutation of 0..n-1 driven by stream(seed, 0, kShuffleTag).
 * For i = n-1 down to 1, j = floor(u * (i+1)) with u the next unit uniform,
 * then swap(perm[i], perm[j]).
 */
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng::Stream s(rng::StreamKey{seed, 0, rng::kShuffleTag});
    for (std::size_t i = n; i-- > 1;) {
        const auto j = static_cast<std::size_t>(s.next_unit() * static_cast<double>(i + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

/// The first floor(N * fraction) shuffled rows form the validation part; both
/// parts keep the original row order.
inline SplitResult split(const LogitSet& set, const SplitSpec& spec) {
    const std::size_t n = set.size();
    if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) {
        throw Error(ErrorKind::DegenerateSplit, "validation fraction must lie in (0,1)");
    }
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.validation_fraction));
    if (n_val < 1 || n_val >= n) {
        throw Error(ErrorKind::DegenerateSplit, "split of " + std::to_string(n) + " rows leaves an empty part");
    }
    const auto perm = shuffled_indices(n, spec.shuffle_seed);
    std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    std::sort(val.begin(), val.end());
    std::sort(test.begin(), test.end());
    return {set.subset(val), set.subset(test), std::move(val), std::move(test)};
}

}  // namespace data
}  // namespace conscal
