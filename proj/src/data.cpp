#include "fegan/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fegan::data {

std::string Date::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

RawSeries::RawSeries(std::vector<Date> dates, std::vector<double> values)
    : dates_(std::move(dates)), values_(std::move(values)) {
    if (dates_.size() != values_.size())
        throw Error("RawSeries: dates and values differ in length");
    if (values_.size() < 2) throw SeriesTooShort(values_.size(), 2);
    for (double v : values_)
        if (!(v > 0.0) || !std::isfinite(v)) throw NonPositivePrice();
    for (std::size_t i = 1; i < dates_.size(); ++i) {
        if (dates_[i] == dates_[i - 1]) throw DuplicateDate(dates_[i].iso());
        if (dates_[i] < dates_[i - 1])
            throw Error("RawSeries: dates not ascending");
    }
}

const char* to_string(Transform t) {
    return t == Transform::LogReturn ? "log_return" : "identity";
}

Transform transform_from_string(const std::string& s) {
    if (s == "log_return") return Transform::LogReturn;
    if (s == "identity") return Transform::Identity;
    throw Error("unknown transform: " + s);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_date(const std::string& s, Date& out) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    out.year = std::stoi(s.substr(0, 4));
    out.month = std::stoi(s.substr(5, 2));
    out.day = std::stoi(s.substr(8, 2));
    return out.month >= 1 && out.month <= 12 && out.day >= 1 && out.day <= 31;
}

bool parse_value(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && std::isfinite(out);
}

} // namespace

RawSeries load_csv(const std::string& path, const std::string& date_column,
                   const std::string& value_column) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_csv_line(line);
    std::ptrdiff_t date_idx = -1, value_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = trim(header[i]);
        if (name == date_column) date_idx = static_cast<std::ptrdiff_t>(i);
        if (name == value_column) value_idx = static_cast<std::ptrdiff_t>(i);
    }
    if (date_idx < 0) throw MissingColumn(date_column);
    if (value_idx < 0) throw MissingColumn(value_column);

    struct Row {
        Date date;
        double value;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        const auto need =
            static_cast<std::size_t>(std::max(date_idx, value_idx)) + 1;
        if (fields.size() < need) throw UnparsableRow(line_number);
        Row row{};
        row.line = line_number;
        if (!parse_date(trim(fields[static_cast<std::size_t>(date_idx)]), row.date))
            throw UnparsableRow(line_number);
        if (!parse_value(trim(fields[static_cast<std::size_t>(value_idx)]), row.value))
            throw UnparsableRow(line_number);
        rows.push_back(row);
    }
    if (rows.empty()) throw EmptyFile(path);

    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].date == rows[i - 1].date)
            throw DuplicateDate(rows[i].date.iso());

    std::vector<Date> dates;
    std::vector<double> values;
    dates.reserve(rows.size());
    values.reserve(rows.size());
    for (const Row& r : rows) {
        dates.push_back(r.date);
        values.push_back(r.value);
    }
    return RawSeries(std::move(dates), std::move(values));
}

CleanSeries clean(const RawSeries& raw, Transform transform) {
    CleanSeries out;
    out.transform = transform;
    out.origin = std::make_shared<RawSeries>(raw);
    const auto& v = raw.values();
    if (transform == Transform::Identity) {
        out.values = v;
        return out;
    }
    out.values.reserve(v.size() - 1);
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        if (!(v[i] > 0.0) || !(v[i + 1] > 0.0)) throw NonPositivePrice();
        out.values.push_back(std::log(v[i + 1] / v[i]));
    }
    return out;
}

WindowBatch sample_windows(const CleanSeries& series, std::size_t batch,
                           std::size_t len, Rng& rng) {
    if (batch < 1 || len < 1) throw Error("sample_windows: batch and len must be >= 1");
    if (series.size() < len) throw SeriesTooShort(series.size(), len);
    WindowBatch out(batch, len);
    const std::size_t span = series.size() - len + 1;
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = rng.uniform_index(span);
        std::copy_n(series.values.begin() + static_cast<std::ptrdiff_t>(off), len,
                    out.row(b));
    }
    return out;
}

std::vector<ContextTargetPair> context_target_pairs(const CleanSeries& series,
                                                    std::size_t context_len,
                                                    std::size_t target_len,
                                                    std::size_t batch, Rng& rng) {
    const std::size_t need = context_len + target_len;
    if (series.size() < need) throw SeriesTooShort(series.size(), need);
    std::vector<ContextTargetPair> out;
    out.reserve(batch);
    const std::size_t span = series.size() - need + 1;
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = rng.uniform_index(span);
        ContextTargetPair pair;
        const auto begin = series.values.begin() + static_cast<std::ptrdiff_t>(off);
        pair.context.assign(begin, begin + static_cast<std::ptrdiff_t>(context_len));
        pair.target.assign(begin + static_cast<std::ptrdiff_t>(context_len),
                           begin + static_cast<std::ptrdiff_t>(need));
        out.push_back(std::move(pair));
    }
    return out;
}

} // namespace fegan::data
