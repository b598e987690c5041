#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kltwin/field.hpp"

namespace kltwin {

// One evaluated (condition, method) cell: the mean and standard deviation of
// the relative error over the test samples, plus the parameters that identify
// the cell.  Absent parameters (e.g. alpha for the nonlinear problem) stay
// disengaged and serialize as empty CSV cells / JSON nulls.
struct ReportRow {
    std::string experiment;
    std::string condition;
    std::string method;
    std::optional<double> sigma2_y;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> gamma;
    std::optional<Index> n_train;
    double mean_error = 0.0;
    double std_error = 0.0;
    Index n_test = 0;
    std::uint64_t seed = 0;
};

struct ErrorReport {
    std::vector<ReportRow> rows;

    const ReportRow& find(const std::string& condition, const std::string& method) const;
};

std::string to_csv(const ErrorReport& report);
std::string to_json(const ErrorReport& report);

// Writes "<base>.csv" and its JSON mirror "<base>.json".
void write_report(const std::filesystem::path& base, const ErrorReport& report);

} // namespace kltwin
