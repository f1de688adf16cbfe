#include <fstream>
#include <iomanip>
#include <sstream>

#include "mmm/eval.hpp"

namespace mmm {

void ExperimentTable::init(std::vector<std::string> row_names, std::vector<std::string> col_names) {
    rows = std::move(row_names);
    cols = std::move(col_names);
    cells.assign(rows.size(), std::vector<ExperimentCell>(cols.size()));
}

ExperimentCell& ExperimentTable::cell(const std::string& row, const std::string& col) {
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < cols.size(); ++c)
            if (rows[r] == row && cols[c] == col) return cells[r][c];
    throw UsageError("experiment table: unknown cell (" + row + ", " + col + ")");
}

const ExperimentCell& ExperimentTable::cell(const std::string& row, const std::string& col) const {
    return const_cast<ExperimentTable*>(this)->cell(row, col);
}

std::string ExperimentTable::to_csv() const {
    std::ostringstream out;
    out << "row,column,seed,accuracy\n";
    out.precision(17);
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < cols.size(); ++c)
            for (auto [seed, acc] : cells[r][c].runs)
                out << rows[r] << ',' << cols[c] << ',' << seed << ',' << acc << '\n';
    return out.str();
}

std::string ExperimentTable::to_text() const {
    size_t name_w = 4;
    for (const auto& r : rows) name_w = std::max(name_w, r.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_w) + 2) << "";
    for (const auto& c : cols) out << std::setw(18) << c;
    out << '\n';
    for (size_t r = 0; r < rows.size(); ++r) {
        out << std::setw(static_cast<int>(name_w) + 2) << rows[r];
        for (size_t c = 0; c < cols.size(); ++c) {
            std::ostringstream cell_text;
            cell_text << std::fixed << std::setprecision(4) << cells[r][c].mean() << " +/- "
                      << std::setprecision(4) << cells[r][c].stddev();
            out << std::setw(18) << cell_text.str();
        }
        out << '\n';
    }
    return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << content;
}

}  // namespace mmm
