#include "emguard/trace_io.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <sstream>

#include "byte_io.hpp"
#include "emguard/errors.hpp"

namespace emguard {

namespace {

using detail::get_f64;
using detail::get_u32;
using detail::put_f64;
using detail::put_u32;
using detail::read_file;
using detail::write_file;

constexpr std::array<char, 4> kTraceMagic{'E', 'M', 'T', 'R'};
constexpr std::uint8_t kTraceVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 1 + 4 + 4;

std::string encode_binary(const TraceMatrix& m) {
    std::string out;
    out.reserve(kHeaderBytes + m.rows() * m.cols() * 8 + m.rows());
    out.append(kTraceMagic.data(), kTraceMagic.size());
    out.push_back(static_cast<char>(kTraceVersion));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.samples.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.samples.cols(); ++c) {
            put_f64(out, m.samples(r, c));
        }
    }
    for (auto label : m.labels) {
        out.push_back(static_cast<char>(label));
    }
    return out;
}

TraceMatrix decode_binary(const std::string& data, const std::string& name) {
    if (data.size() < kHeaderBytes) {
        throw FormatError(name + ": truncated header");
    }
    if (std::memcmp(data.data(), kTraceMagic.data(), kTraceMagic.size()) != 0) {
        throw FormatError(name + ": bad magic");
    }
    if (static_cast<std::uint8_t>(data[4]) != kTraceVersion) {
        throw FormatError(name + ": unsupported version " +
                          std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(data[4]))));
    }
    const std::size_t rows = get_u32(data, 5);
    const std::size_t cols = get_u32(data, 9);
    if (rows == 0 || cols == 0) {
        throw FormatError(name + ": empty matrix");
    }
    const std::size_t expected = kHeaderBytes + rows * cols * 8 + rows;
    if (data.size() != expected) {
        throw FormatError(name + ": size " + std::to_string(data.size()) + " does not match header (" +
                          std::to_string(expected) + ")");
    }
    TraceMatrix m;
    m.samples.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::size_t at = kHeaderBytes;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c, at += 8) {
            m.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get_f64(data, at);
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const auto byte = static_cast<std::uint8_t>(data[at + r]);
        if (byte > 1) {
            throw FormatError(name + ": invalid label byte in row " + std::to_string(r));
        }
        m.labels.push_back(static_cast<Label>(byte));
    }
    m.meta.resize(rows);
    return m;
}

std::string encode_csv(const TraceMatrix& m) {
    std::string out;
    std::array<char, 32> buf{};
    for (Eigen::Index r = 0; r < m.samples.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.samples.cols(); ++c) {
            if (c > 0) {
                out.push_back(',');
            }
            // shortest representation that round-trips exactly
            auto res = std::to_chars(buf.data(), buf.data() + buf.size(), m.samples(r, c));
            out.append(buf.data(), res.ptr);
        }
        out.push_back('\n');
    }
    return out;
}

TraceMatrix decode_csv(const std::string& data, const std::string& name) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(data);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<double> values;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            while (p < end && *p == ' ') {
                ++p;
            }
            double v = 0.0;
            auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{}) {
                throw FormatError(name + ": line " + std::to_string(line_no) + " is not numeric");
            }
            values.push_back(v);
            p = res.ptr;
            while (p < end && *p == ' ') {
                ++p;
            }
            if (p == end) {
                break;
            }
            if (*p != ',') {
                throw FormatError(name + ": line " + std::to_string(line_no) + " has a bad separator");
            }
            ++p;
        }
        if (!rows.empty() && values.size() != rows.front().size()) {
            throw FormatError(name + ": line " + std::to_string(line_no) + " has " +
                              std::to_string(values.size()) + " samples, expected " +
                              std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw FormatError(name + ": no trace rows");
    }
    Matrix samples(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(rows[r].begin(), rows[r].end(), samples.row(static_cast<Eigen::Index>(r)).data());
    }
    return TraceMatrix(std::move(samples));
}

nlohmann::json rows_to_json(const TraceMatrix& m) {
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row{{"index", i}, {"label", to_string(m.labels[i])}};
        const auto& meta = m.meta[i];
        row["snr_db"] = meta.snr_db ? nlohmann::json(*meta.snr_db) : nlohmann::json(nullptr);
        row["seed"] = meta.seed ? nlohmann::json(*meta.seed) : nlohmann::json(nullptr);
        row["injection"] = meta.injection ? nlohmann::json(*meta.injection) : nlohmann::json(nullptr);
        rows.push_back(std::move(row));
    }
    return rows;
}

void apply_sidecar(TraceMatrix& m, const nlohmann::json& sidecar, bool take_labels,
                   const std::string& name) {
    if (!sidecar.contains("rows")) {
        return;
    }
    const auto& rows = sidecar.at("rows");
    if (rows.size() != m.rows()) {
        throw FormatError(name + ": sidecar lists " + std::to_string(rows.size()) + " rows, file has " +
                          std::to_string(m.rows()));
    }
    try {
        for (const auto& row : rows) {
            const auto i = row.at("index").get<std::size_t>();
            if (i >= m.rows()) {
                throw FormatError(name + ": sidecar row index out of range");
            }
            if (take_labels) {
                m.labels[i] = label_from_string(row.at("label").get<std::string>());
            }
            auto& meta = m.meta[i];
            if (row.contains("snr_db") && !row["snr_db"].is_null()) {
                meta.snr_db = row["snr_db"].get<double>();
            }
            if (row.contains("seed") && !row["seed"].is_null()) {
                meta.seed = row["seed"].get<std::uint64_t>();
            }
            if (row.contains("injection") && !row["injection"].is_null()) {
                meta.injection = row["injection"].get<std::string>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(name + ": malformed sidecar: " + e.what());
    }
}

} // namespace

TraceFormat parse_trace_format(const std::string& text) {
    if (text == "csv") {
        return TraceFormat::Csv;
    }
    if (text == "binary" || text == "bin" || text == "emtr") {
        return TraceFormat::Binary;
    }
    throw InvalidParameter("unknown trace format '" + text + "'");
}

TraceFormat format_for_path(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? TraceFormat::Csv : TraceFormat::Binary;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    auto out = path;
    out += ".meta.json";
    return out;
}

void save_traces(const TraceMatrix& matrix, const std::filesystem::path& path, TraceFormat format,
                 const nlohmann::json& extra) {
    if (matrix.rows() == 0 || matrix.cols() == 0) {
        throw FormatError("refusing to write an empty trace matrix");
    }
    if (matrix.labels.size() != matrix.rows() || matrix.meta.size() != matrix.rows()) {
        throw DimensionError("label/meta count does not match row count");
    }
    write_file(path, format == TraceFormat::Binary ? encode_binary(matrix) : encode_csv(matrix));

    nlohmann::json sidecar = extra.is_object() ? extra : nlohmann::json::object();
    sidecar["format"] = format == TraceFormat::Binary ? "binary" : "csv";
    sidecar["rows"] = rows_to_json(matrix);
    write_file(sidecar_path(path), sidecar.dump(1) + "\n");
}

nlohmann::json load_sidecar(const std::filesystem::path& path) {
    const auto side = sidecar_path(path);
    if (!std::filesystem::exists(side)) {
        return nlohmann::json::object();
    }
    try {
        return nlohmann::json::parse(read_file(side));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(side.string() + ": " + e.what());
    }
}

TraceMatrix load_traces(const std::filesystem::path& path, TraceFormat format) {
    const std::string data = read_file(path);
    const std::string name = path.string();
    if (data.empty()) {
        throw FormatError(name + ": empty file");
    }
    TraceMatrix m = format == TraceFormat::Binary ? decode_binary(data, name) : decode_csv(data, name);
    apply_sidecar(m, load_sidecar(path), format == TraceFormat::Csv, name);
    return m;
}

} // namespace emguard
