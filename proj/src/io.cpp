#include "combtrack/io.hpp"

#include "combtrack/errors.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace combtrack {

namespace {

using nlohmann::json;

constexpr std::string_view kSignalMagic = "DCSR1";
constexpr std::string_view kPhaseMagic = "DCPH1";

std::ofstream open_out(const std::filesystem::path& path, bool binary)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    return out;
}

void put_u32(std::ostream& out, std::uint32_t v)
{
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double x)
{
    const auto bits = std::bit_cast<std::uint64_t>(x);
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b.data(), 8);
}

double get_f64(const unsigned char* p)
{
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    return std::bit_cast<double>(bits);
}

void write_container(const std::filesystem::path& path, std::string_view magic, const json& header,
                     const double* values, std::size_t count)
{
    auto out = open_out(path, true);
    const std::string text = header.dump();
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < count; ++i) put_f64(out, values[i]);
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

struct Container {
    json header;
    std::vector<unsigned char> payload;
};

Container read_container(const std::filesystem::path& path, std::string_view magic)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string where = "'" + path.string() + "': ";
    if (bytes.size() < magic.size() || std::string_view(reinterpret_cast<const char*>(bytes.data()), magic.size()) != magic) {
        throw FormatError(where + "bad magic (expected " + std::string(magic) + ")");
    }
    std::size_t at = magic.size();
    if (bytes.size() < at + 4) throw FormatError(where + "truncated header length");
    const std::uint32_t len = static_cast<std::uint32_t>(bytes[at]) | (static_cast<std::uint32_t>(bytes[at + 1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[at + 2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[at + 3]) << 24);
    at += 4;
    if (bytes.size() < at + len) throw FormatError(where + "header shorter than its declared length");
    Container c;
    try {
        c.header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                               bytes.begin() + static_cast<std::ptrdiff_t>(at + len));
    } catch (const json::exception& e) {
        throw FormatError(where + "header is not valid JSON (" + e.what() + ")");
    }
    if (!c.header.is_object()) throw FormatError(where + "header is not a JSON object");
    c.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at + len), bytes.end());
    return c;
}

template <typename T>
T header_field(const json& h, const char* key, const std::string& where)
{
    if (!h.contains(key)) throw FormatError(where + "header field " + key + " missing");
    try {
        return h.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(where + "header field " + key + " has the wrong type");
    }
}

std::size_t payload_values(const Container& c, std::size_t expected, const std::string& where)
{
    if (c.payload.size() < expected * 8) throw FormatError(where + "payload shorter than header num_samples");
    if (c.payload.size() > expected * 8) throw FormatError(where + "payload longer than header num_samples");
    return expected;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return in;
}

} // namespace

std::string format_double(double x)
{
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

void write_signal(const SignalRecord& record, const std::filesystem::path& path)
{
    record.validate();
    json h;
    h["fs_hz"] = record.sample_rate;
    h["num_samples"] = record.samples.size();
    h["source"] = record.source;
    if (record.seed) h["seed"] = *record.seed;
    write_container(path, kSignalMagic, h, record.samples.data(), record.samples.size());
}

SignalRecord read_signal(const std::filesystem::path& path)
{
    const auto c = read_container(path, kSignalMagic);
    const std::string where = "'" + path.string() + "': ";
    SignalRecord r;
    r.sample_rate = header_field<double>(c.header, "fs_hz", where);
    if (!(r.sample_rate > 0.0) || !std::isfinite(r.sample_rate)) throw FormatError(where + "fs_hz must be > 0");
    const auto n = header_field<std::uint64_t>(c.header, "num_samples", where);
    r.source = c.header.contains("source") ? header_field<std::string>(c.header, "source", where) : "file";
    if (c.header.contains("seed") && !c.header["seed"].is_null()) {
        r.seed = header_field<std::uint64_t>(c.header, "seed", where);
    }
    payload_values(c, n, where);
    r.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) r.samples[i] = get_f64(c.payload.data() + 8 * i);
    try {
        r.validate();
    } catch (const DomainError& e) {
        throw FormatError(where + e.what());
    }
    return r;
}

void write_phases(const PhaseTrajectories& phases, const std::filesystem::path& path)
{
    json h;
    h["fs_hz"] = phases.sample_rate;
    h["num_steps"] = phases.steps();
    h["line_indices"] = phases.line_indices;
    h["guard_samples"] = phases.guard_samples;
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = phases.phases;
    write_container(path, kPhaseMagic, h, rows.data(), static_cast<std::size_t>(rows.size()));
}

PhaseTrajectories read_phases(const std::filesystem::path& path)
{
    const auto c = read_container(path, kPhaseMagic);
    const std::string where = "'" + path.string() + "': ";
    PhaseTrajectories p;
    p.sample_rate = header_field<double>(c.header, "fs_hz", where);
    const auto k = header_field<std::uint64_t>(c.header, "num_steps", where);
    p.line_indices = header_field<std::vector<int>>(c.header, "line_indices", where);
    p.guard_samples = header_field<std::size_t>(c.header, "guard_samples", where);
    const std::size_t m = p.line_indices.size();
    payload_values(c, k * m, where);
    p.phases.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            p.phases(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                get_f64(c.payload.data() + 8 * (i * m + j));
        }
    }
    return p;
}

void write_matrix_csv(const Eigen::MatrixXd& values, const std::vector<int>& line_indices,
                      const std::filesystem::path& path)
{
    const auto m = static_cast<Eigen::Index>(line_indices.size());
    if (values.rows() != m || values.cols() != m) throw DimensionError("write_matrix_csv: size differs from line count");
    std::ostringstream s;
    for (Eigen::Index j = 0; j < m; ++j) s << (j ? "," : "") << line_indices[static_cast<std::size_t>(j)];
    s << '\n';
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) s << (j ? "," : "") << format_double(values(i, j));
        s << '\n';
    }
    write_text(s.str(), path);
}

void write_correlation_csv(const CorrelationMatrix& c, const std::filesystem::path& path)
{
    write_matrix_csv(c.values, c.line_indices, path);
}

CorrelationMatrix read_correlation_csv(const std::filesystem::path& path)
{
    auto in = open_in(path);
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream s(line);
        std::string cell;
        while (std::getline(s, cell, ',')) cells.push_back(cell);
        return cells;
    };
    auto number = [&](const std::string& cell, auto parse) {
        try {
            std::size_t used = 0;
            const auto v = parse(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            return v;
        } catch (const std::logic_error&) {
            throw FormatError("'" + path.string() + "': bad number '" + cell + "'");
        }
    };
    auto to_int = [](const std::string& t, std::size_t* used) { return std::stoi(t, used); };
    auto to_double = [](const std::string& t, std::size_t* used) { return std::stod(t, used); };
    std::string line;
    CorrelationMatrix c;
    if (!std::getline(in, line)) throw FormatError("'" + path.string() + "': empty file");
    for (const auto& cell : split(line)) c.line_indices.push_back(number(cell, to_int));
    const auto m = static_cast<Eigen::Index>(c.line_indices.size());
    c.values.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!std::getline(in, line)) throw FormatError("'" + path.string() + "': missing rows");
        const auto cells = split(line);
        if (static_cast<Eigen::Index>(cells.size()) != m) throw FormatError("'" + path.string() + "': ragged row");
        for (Eigen::Index j = 0; j < m; ++j) c.values(i, j) = number(cells[static_cast<std::size_t>(j)], to_double);
    }
    return c;
}

void write_variance_csv(const VarianceCurve& curve, const std::filesystem::path& path)
{
    std::ostringstream s;
    s << "line_index,variance\n";
    for (std::size_t i = 0; i < curve.variance.size(); ++i) {
        s << curve.line_indices[i] << ',' << format_double(curve.variance[i]) << '\n';
    }
    write_text(s.str(), path);
}

void write_em_trace_csv(const EmTrace& trace, const std::filesystem::path& path)
{
    std::ostringstream s;
    s << "iteration,loglik,sigma2,q_trace,q_eig1,q_eig2\n";
    for (const auto& e : trace.entries) {
        s << e.iteration << ',' << format_double(e.loglik) << ',' << format_double(e.sigma2) << ','
          << format_double(e.q_trace) << ',' << format_double(e.q_eig1) << ',' << format_double(e.q_eig2) << '\n';
    }
    write_text(s.str(), path);
}

void write_text(const std::string& text, const std::filesystem::path& path)
{
    auto out = open_out(path, false);
    out << text;
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

} // namespace combtrack
