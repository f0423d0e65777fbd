#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "amgnn/errors.hpp"
#include "amgnn/sparse.hpp"

namespace amgnn {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

struct MmHeader {
    bool symmetric = false;
};

MmHeader parse_header(const std::string& line, const std::string& path) {
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (lower(banner) != "%%matrixmarket" || lower(object) != "matrix")
        throw IoError(path + ": not a MatrixMarket matrix file");
    if (lower(format) != "coordinate")
        throw IoError(path + ": unsupported format '" + format + "' (only coordinate)");
    if (lower(field) != "real")
        throw IoError(path + ": unsupported field '" + field + "' (only real)");
    const std::string sym = lower(symmetry);
    if (sym != "general" && sym != "symmetric")
        throw IoError(path + ": unsupported symmetry '" + symmetry + "'");
    return MmHeader{sym == "symmetric"};
}

// First non-comment line after the banner carries the sizes.
std::string next_data_line(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        std::size_t pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos) continue;
        if (line[pos] == '%') continue;
        return line;
    }
    return {};
}

} // namespace

CsrMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");

    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    const MmHeader hdr = parse_header(line, path);

    const std::string size_line = next_data_line(in);
    if (size_line.empty()) throw IoError(path + ": missing size line");
    index_t nr = 0, nc = 0;
    long long nnz = 0;
    {
        std::istringstream ss(size_line);
        if (!(ss >> nr >> nc >> nnz)) throw IoError(path + ": malformed size line");
    }

    CooMatrix coo;
    coo.n_rows = nr;
    coo.n_cols = nc;
    for (long long k = 0; k < nnz; ++k) {
        const std::string entry = next_data_line(in);
        if (entry.empty())
            throw IoError(path + ": expected " + std::to_string(nnz) + " entries, got " +
                          std::to_string(k));
        std::istringstream ss(entry);
        index_t i = 0, j = 0;
        double v = 0.0;
        if (!(ss >> i >> j >> v)) throw IoError(path + ": malformed entry on line '" + entry + "'");
        if (i < 1 || i > nr || j < 1 || j > nc)
            throw IoError(path + ": index (" + std::to_string(i) + "," + std::to_string(j) +
                          ") outside " + std::to_string(nr) + "x" + std::to_string(nc));
        coo.add(i - 1, j - 1, v);
        if (hdr.symmetric && i != j) coo.add(j - 1, i - 1, v);
    }
    return build(coo);
}

void write_matrix_market(const std::string& path, const CsrMatrix& a) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.n_rows << " " << a.n_cols << " " << a.nnz() << "\n";
    char buf[64];
    for (index_t i = 0; i < a.n_rows; ++i) {
        for (index_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", a.val[k]);
            out << (i + 1) << " " << (a.col_idx[k] + 1) << " " << buf << "\n";
        }
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

std::vector<double> read_vector_market(const std::string& path) {
    const CsrMatrix m = read_matrix_market(path);
    if (m.n_cols != 1)
        throw IoError(path + ": expected an n x 1 vector, got " + std::to_string(m.n_rows) + "x" +
                      std::to_string(m.n_cols));
    std::vector<double> v(m.n_rows, 0.0);
    for (index_t i = 0; i < m.n_rows; ++i)
        for (index_t k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k) v[i] = m.val[k];
    return v;
}

void write_vector_market(const std::string& path, const std::vector<double>& v) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    std::size_t nnz = 0;
    for (double x : v)
        if (x != 0.0) ++nnz;
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << v.size() << " 1 " << nnz << "\n";
    char buf[64];
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] == 0.0) continue;
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        out << (i + 1) << " 1 " << buf << "\n";
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

} // namespace amgnn
