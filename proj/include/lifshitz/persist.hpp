#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <system_error>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "lifshitz/error.hpp"

namespace lifshitz {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

/// RFC 4180 table: CRLF line ends, fields quoted only when they contain a
/// comma, quote or line break.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row(std::vector<std::string> fields)
    {
        if (fields.size() != header_.size()) {
            throw ContractError("csv: row has " + std::to_string(fields.size()) + " fields, header has " +
                                std::to_string(header_.size()));
        }
        rows_.push_back(std::move(fields));
        return *this;
    }

    CsvTable& row(const std::vector<double>& values)
    {
        std::vector<std::string> fields;
        fields.reserve(values.size());
        for (double v : values) fields.push_back(format_double(v));
        return row(std::move(fields));
    }

    std::size_t size() const { return rows_.size(); }

    static std::string escape(const std::string& field)
    {
        if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
        std::string out = "\"";
        for (char c : field) {
            if (c == '"') out += '"';
            out += c;
        }
        return out + "\"";
    }

    std::string str() const
    {
        std::string out;
        auto line = [&](const std::vector<std::string>& fields) {
            for (std::size_t k = 0; k < fields.size(); ++k) {
                if (k) out += ',';
                out += escape(fields[k]);
            }
            out += "\r\n";
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::string sha256_hex(const std::string& data)
{
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
        throw Error("sha256: OpenSSL digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never see a partial file. The temporary is removed on failure.
inline void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (out) out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (out) out.flush();
        if (!out) {
            fs::remove(tmp, ec);
            throw IoError("cannot write '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignore;
        fs::remove(tmp, ignore);
        throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

inline void append_line(const std::filesystem::path& path, const std::string& line)
{
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (out) out << line << '\n';
    if (out) out.flush();
    if (!out) throw IoError("cannot append to '" + path.string() + "'");
}

inline constexpr int run_record_schema_version = 1;

/// One line of runs.jsonl.
struct RunRecord {
    std::string subcommand;
    std::string version;
    nlohmann::json config;
    double wall_seconds = 0.0;
    std::string status = "ok";
    std::string error;
    nlohmann::json constants = nlohmann::json::object();
    /// artifact file name -> SHA-256 of its contents
    std::map<std::string, std::string> digests;

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["schema_version"] = run_record_schema_version;
        j["subcommand"] = subcommand;
        j["version"] = version;
        j["status"] = status;
        if (!error.empty()) j["error"] = error;
        j["wall_seconds"] = wall_seconds;
        j["config"] = config;
        j["constants"] = constants;
        j["digests"] = digests;
        return j;
    }
};

/// Collects artifacts of one run inside an output directory.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const { return dir_; }

    void write(const std::string& name, const std::string& content)
    {
        write_atomic(dir_ / name, content);
        digests_[name] = sha256_hex(content);
    }

    void write_csv(const std::string& name, const CsvTable& table) { write(name, table.str()); }

    void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

    const std::map<std::string, std::string>& digests() const { return digests_; }

    /// Deletes every artifact written so far (used when a run fails midway).
    void remove_all()
    {
        std::error_code ec;
        for (const auto& [name, digest] : digests_) std::filesystem::remove(dir_ / name, ec);
        digests_.clear();
    }

    void append_record(const RunRecord& rec) const { append_line(dir_ / "runs.jsonl", rec.to_json().dump()); }

private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> digests_;
};

} // namespace lifshitz
