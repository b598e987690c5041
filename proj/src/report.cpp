#include "kltwin/report.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kltwin {

const ReportRow& ErrorReport::find(const std::string& condition,
                                   const std::string& method) const {
    for (const ReportRow& row : rows)
        if (row.condition == condition && row.method == method) return row;
    throw InvalidArgument("report has no row (" + condition + ", " + method + ")");
}

namespace {

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

template <typename T>
std::string cell(const std::optional<T>& v) {
    if (!v) return "";
    if constexpr (std::is_same_v<T, Index>) return std::to_string(*v);
    else return format_double(*v);
}

} // namespace

std::string to_csv(const ErrorReport& report) {
    std::string out =
        "experiment,condition,method,sigma2_y,alpha,beta,gamma,n_train,"
        "mean_error,std_error,n_test,seed\n";
    for (const ReportRow& row : report.rows) {
        out += row.experiment + ',' + row.condition + ',' + row.method + ',';
        out += cell(row.sigma2_y) + ',' + cell(row.alpha) + ',' + cell(row.beta) + ',' +
               cell(row.gamma) + ',' + cell(row.n_train) + ',';
        out += format_double(row.mean_error) + ',' + format_double(row.std_error) + ',';
        out += std::to_string(row.n_test) + ',' + std::to_string(row.seed) + '\n';
    }
    return out;
}

namespace {

template <typename T>
nlohmann::json json_cell(const std::optional<T>& v) {
    if (!v) return nullptr;
    return *v;
}

} // namespace

std::string to_json(const ErrorReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const ReportRow& row : report.rows) {
        rows.push_back({{"experiment", row.experiment},
                        {"condition", row.condition},
                        {"method", row.method},
                        {"sigma2_y", json_cell(row.sigma2_y)},
                        {"alpha", json_cell(row.alpha)},
                        {"beta", json_cell(row.beta)},
                        {"gamma", json_cell(row.gamma)},
                        {"n_train", json_cell(row.n_train)},
                        {"mean_error", row.mean_error},
                        {"std_error", row.std_error},
                        {"n_test", row.n_test},
                        {"seed", row.seed}});
    }
    return nlohmann::json{{"rows", rows}}.dump(2);
}

void write_report(const std::filesystem::path& base, const ErrorReport& report) {
    const auto write_one = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
        out << text;
        if (!text.empty() && text.back() != '\n') out << '\n';
    };
    write_one(base.string() + ".csv", to_csv(report));
    write_one(base.string() + ".json", to_json(report));
}

} // namespace kltwin
