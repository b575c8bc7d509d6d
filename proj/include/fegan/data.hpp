#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fegan/common.hpp"

namespace fegan::data {

// ---------------------------------------------------------------------------
// Errors

class MissingColumn : public Error {
public:
    explicit MissingColumn(const std::string& name)
        : Error("missing column: " + name) {}
};

class UnparsableRow : public Error {
public:
    explicit UnparsableRow(std::size_t line_number)
        : Error("unparsable row at line " + std::to_string(line_number)),
          line(line_number) {}
    std::size_t line;
};

class DuplicateDate : public Error {
public:
    explicit DuplicateDate(const std::string& date)
        : Error("duplicate date: " + date) {}
};

class EmptyFile : public Error {
public:
    explicit EmptyFile(const std::string& path) : Error("no data rows in " + path) {}
};

class NonPositivePrice : public Error {
public:
    NonPositivePrice() : Error("price values must be strictly positive") {}
};

class SeriesTooShort : public Error {
public:
    SeriesTooShort(std::size_t have, std::size_t need)
        : Error("series too short: have " + std::to_string(have) + ", need " +
                std::to_string(need)) {}
};

// ---------------------------------------------------------------------------
// Types

struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    auto operator<=>(const Date&) const = default;
    std::string iso() const;
};

// Daily price series in ascending date order. Construction validates the
// invariants: strictly increasing dates, positive values, length >= 2.
class RawSeries {
public:
    RawSeries(std::vector<Date> dates, std::vector<double> values);

    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    std::vector<Date> dates_;
    std::vector<double> values_;
};

enum class Transform { LogReturn, Identity };

const char* to_string(Transform t);
Transform transform_from_string(const std::string& s);

// Series in model space. With LogReturn the values are one shorter than the
// raw series; with Identity they are a copy.
struct CleanSeries {
    std::vector<double> values;
    Transform transform = Transform::Identity;
    std::shared_ptr<const RawSeries> origin; // null for synthetic series

    std::size_t size() const { return values.size(); }

    static CleanSeries from_values(std::vector<double> v,
                                   Transform t = Transform::Identity) {
        return CleanSeries{std::move(v), t, nullptr};
    }
};

// B x T matrix of sequences, row-major. Rows are contiguous slices of one
// CleanSeries when produced by sample_windows.
class WindowBatch {
public:
    WindowBatch(std::size_t batch, std::size_t len)
        : batch_(batch), len_(len), values_(batch * len, 0.0) {}

    std::size_t batch() const { return batch_; }
    std::size_t len() const { return len_; }

    double* row(std::size_t b) { return values_.data() + b * len_; }
    const double* row(std::size_t b) const { return values_.data() + b * len_; }
    std::span<const double> row_span(std::size_t b) const { return {row(b), len_}; }
    std::span<double> row_span(std::size_t b) { return {row(b), len_}; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::size_t batch_;
    std::size_t len_;
    std::vector<double> values_;
};

struct ContextTargetPair {
    std::vector<double> context;
    std::vector<double> target;
};

// ---------------------------------------------------------------------------
// Operations

// Load a CSV with a header row, one ISO-8601 date column and one decimal
// value column. Rows may arrive in any order; the result is date-ascending.
RawSeries load_csv(const std::string& path, const std::string& date_column,
                   const std::string& value_column);

CleanSeries clean(const RawSeries& raw, Transform transform);

// B contiguous windows of length T at uniformly drawn offsets.
WindowBatch sample_windows(const CleanSeries& series, std::size_t batch,
                           std::size_t len, Rng& rng);

// B (context, target) pairs where the context slice ends exactly where the
// target slice begins.
std::vector<ContextTargetPair> context_target_pairs(const CleanSeries& series,
                                                    std::size_t context_len,
                                                    std::size_t target_len,
                                                    std::size_t batch, Rng& rng);

} // namespace fegan::data
