#include "coe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include <json.hpp>

namespace coe {

using nlohmann::json;

const char* to_string(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::io: return "io";
        case ErrorCategory::format: return "format";
        case ErrorCategory::validation: return "validation";
        case ErrorCategory::dimension: return "dimension";
        case ErrorCategory::infeasible: return "infeasible";
        case ErrorCategory::upstream: return "upstream";
    }
    return "unknown";
}

int exit_code(ErrorCategory category) {
    return 2 + static_cast<int>(category);
}

const char* to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::train;
    if (text == "val") return Split::val;
    if (text == "test") return Split::test;
    fail(ErrorCategory::format, "unknown split '" + text + "'");
}

const char* to_string(Verdict verdict) {
    return verdict == Verdict::win ? "win" : "loss";
}

Verdict parse_verdict(const std::string& text) {
    if (text == "win") return Verdict::win;
    if (text == "loss") return Verdict::loss;
    fail(ErrorCategory::format, "unknown verdict '" + text + "'");
}

// --- CategorySet -------------------------------------------------------------

CategorySet CategorySet::from_names(std::vector<std::string> names) {
    std::unordered_set<std::string> seen;
    CategorySet set;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].empty()) fail(ErrorCategory::validation, "empty category name");
        if (!seen.insert(names[i]).second)
            fail(ErrorCategory::validation, "duplicate category name '" + names[i] + "'");
        if (names[i] == "general") set.general_index = i;
    }
    set.names = std::move(names);
    return set;
}

CategorySet CategorySet::with_general() const {
    if (has_general()) return *this;
    CategorySet extended = *this;
    extended.general_index = extended.names.size();
    extended.names.push_back("general");
    return extended;
}

std::optional<std::size_t> CategorySet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    return std::nullopt;
}

const std::string& CategorySet::name_of(std::size_t index) const {
    if (index >= names.size())
        fail(ErrorCategory::validation, "category index " + std::to_string(index) + " out of range");
    return names[index];
}

// --- EmbeddingMatrix ---------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, std::uint32_t dim,
                                 std::vector<float> data)
    : ids_(std::move(ids)), dim_(dim), data_(std::move(data)) {
    if (dim_ == 0) fail(ErrorCategory::validation, "embedding dim must be positive");
    if (data_.size() != ids_.size() * static_cast<std::size_t>(dim_))
        fail(ErrorCategory::validation, "embedding data size does not match ids x dim");
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i].empty()) fail(ErrorCategory::validation, "empty embedding id at row " + std::to_string(i));
        if (!index_.emplace(ids_[i], i).second)
            fail(ErrorCategory::validation, "duplicate embedding id '" + ids_[i] + "'");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i]))
            fail(ErrorCategory::validation,
                 "non-finite embedding value in row '" + ids_[i / dim_] + "'");
    }
}

std::span<const float> EmbeddingMatrix::row(std::size_t i) const {
    if (i >= rows()) fail(ErrorCategory::validation, "embedding row " + std::to_string(i) + " out of range");
    return {data_.data() + i * dim_, dim_};
}

std::optional<std::size_t> EmbeddingMatrix::row_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

// --- ExpertCatalog -----------------------------------------------------------

ExpertCatalog ExpertCatalog::from_experts(std::vector<Expert> experts) {
    std::unordered_set<std::string> seen;
    for (const auto& e : experts) {
        if (e.name.empty()) fail(ErrorCategory::validation, "empty expert name");
        if (!seen.insert(e.name).second)
            fail(ErrorCategory::validation, "duplicate expert name '" + e.name + "'");
        if (!(e.params_billions > 0))
            fail(ErrorCategory::validation, "expert '" + e.name + "' params_billions must be > 0");
        if (!(e.bytes_per_param > 0))
            fail(ErrorCategory::validation, "expert '" + e.name + "' bytes_per_param must be > 0");
    }
    return ExpertCatalog{std::move(experts)};
}

std::optional<std::size_t> ExpertCatalog::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < experts.size(); ++i)
        if (experts[i].name == name) return i;
    return std::nullopt;
}

const Expert& ExpertCatalog::at(std::size_t index) const {
    if (index >= experts.size())
        fail(ErrorCategory::validation, "expert index " + std::to_string(index) + " out of range");
    return experts[index];
}

std::vector<double> ExpertCatalog::sizes_billions() const {
    std::vector<double> sizes;
    sizes.reserve(experts.size());
    for (const auto& e : experts) sizes.push_back(e.params_billions);
    return sizes;
}

// --- line-delimited JSON helpers ----------------------------------------------

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream out(path, mode);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    return out;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        fail(ErrorCategory::format, path.string() + ":" + std::to_string(lineno) + ": malformed record");
    return j;
}

std::string require_string(const json& j, const char* key, const std::filesystem::path& path,
                           std::size_t lineno) {
    if (!j.contains(key) || !j[key].is_string())
        fail(ErrorCategory::format,
             path.string() + ":" + std::to_string(lineno) + ": missing string field '" + key + "'");
    return j[key].get<std::string>();
}

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

// --- prompts -------------------------------------------------------------------

static std::vector<PromptRecord> load_prompts_impl(const std::filesystem::path& path,
                                                   const CategorySet* categories) {
    auto in = open_input(path);
    std::vector<PromptRecord> records;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        json j = parse_line(line, path, lineno);
        PromptRecord rec;
        rec.id = require_string(j, "id", path, lineno);
        rec.text = require_string(j, "text", path, lineno);
        if (rec.id.empty())
            fail(ErrorCategory::validation, path.string() + ":" + std::to_string(lineno) + ": empty id");
        if (!ids.insert(rec.id).second)
            fail(ErrorCategory::validation,
                 path.string() + ":" + std::to_string(lineno) + ": duplicate id '" + rec.id + "'");
        if (j.contains("category") && !j["category"].is_null()) {
            rec.category = require_string(j, "category", path, lineno);
            if (categories && !categories->index_of(*rec.category))
                fail(ErrorCategory::validation, path.string() + ":" + std::to_string(lineno) +
                                                    ": unknown category '" + *rec.category + "'");
        }
        if (j.contains("split") && !j["split"].is_null())
            rec.split = parse_split(require_string(j, "split", path, lineno));
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<PromptRecord> load_prompts(const std::filesystem::path& path) {
    return load_prompts_impl(path, nullptr);
}

std::vector<PromptRecord> load_prompts(const std::filesystem::path& path,
                                       const CategorySet& categories) {
    return load_prompts_impl(path, &categories);
}

void save_prompts(std::span<const PromptRecord> prompts, const std::filesystem::path& path) {
    auto out = open_output(path);
    for (const auto& rec : prompts) {
        json j{{"id", rec.id}, {"text", rec.text}};
        if (rec.category) j["category"] = *rec.category;
        if (rec.split) j["split"] = to_string(*rec.split);
        out << j.dump() << '\n';
    }
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

// --- embeddings -----------------------------------------------------------------

namespace {

constexpr char kEmbeddingMagic[8] = {'C', 'O', 'E', 'E', 'M', 'B', '1', '\0'};
constexpr std::uint32_t kEmbeddingVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(out, bits);
}

bool get_bytes(std::istream& in, char* dst, std::size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint16_t get_u16(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[2];
    if (!get_bytes(in, reinterpret_cast<char*>(b), 2))
        fail(ErrorCategory::format, "truncated embeddings file " + path.string());
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!get_bytes(in, reinterpret_cast<char*>(b), 4))
        fail(ErrorCategory::format, "truncated embeddings file " + path.string());
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    auto out = open_output(path, std::ios::trunc | std::ios::binary);
    std::string buf;
    buf.reserve(64 + matrix.data().size() * 4);
    buf.append(kEmbeddingMagic, sizeof kEmbeddingMagic);
    put_u32(buf, kEmbeddingVersion);
    put_u32(buf, static_cast<std::uint32_t>(matrix.rows()));
    put_u32(buf, matrix.dim());
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        const std::string& id = matrix.ids()[i];
        if (id.size() > std::numeric_limits<std::uint16_t>::max())
            fail(ErrorCategory::validation, "embedding id longer than 65535 bytes");
        put_u16(buf, static_cast<std::uint16_t>(id.size()));
        buf.append(id);
        for (float v : matrix.row(i)) put_f32(buf, v);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());

    char magic[8];
    if (!get_bytes(in, magic, sizeof magic) || std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0)
        fail(ErrorCategory::format, "bad magic in embeddings file " + path.string());
    const std::uint32_t version = get_u32(in, path);
    if (version != kEmbeddingVersion)
        fail(ErrorCategory::format,
             "unsupported embeddings version " + std::to_string(version) + " in " + path.string());
    const std::uint32_t count = get_u32(in, path);
    const std::uint32_t dim = get_u32(in, path);
    if (dim == 0) fail(ErrorCategory::format, "zero dim in embeddings file " + path.string());

    std::vector<std::string> ids;
    ids.reserve(count);
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(count) * dim);
    std::vector<char> row_buf(static_cast<std::size_t>(dim) * 4);
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint16_t id_len = get_u16(in, path);
        std::string id(id_len, '\0');
        if (!get_bytes(in, id.data(), id_len))
            fail(ErrorCategory::format, "truncated embeddings file " + path.string());
        ids.push_back(std::move(id));
        if (!get_bytes(in, row_buf.data(), row_buf.size()))
            fail(ErrorCategory::format, "truncated embeddings file " + path.string());
        for (std::uint32_t c = 0; c < dim; ++c) {
            const unsigned char* b = reinterpret_cast<const unsigned char*>(row_buf.data()) + c * 4;
            std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                 (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
            float v;
            std::memcpy(&v, &bits, sizeof v);
            if (!std::isfinite(v))
                fail(ErrorCategory::format,
                     "non-finite value in row '" + ids.back() + "' of " + path.string());
            data.push_back(v);
        }
    }
    return EmbeddingMatrix(std::move(ids), dim, std::move(data));
}

// --- expert catalog ---------------------------------------------------------------

ExpertCatalog load_catalog(const std::filesystem::path& path) {
    auto in = open_input(path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCategory::format, "malformed catalog file " + path.string());
    const json& list = j.is_array() ? j : j.value("experts", json::array());
    if (!list.is_array() || list.empty())
        fail(ErrorCategory::format, "catalog file " + path.string() + " lists no experts");
    std::vector<Expert> experts;
    for (const auto& e : list) {
        Expert expert;
        if (!e.contains("name") || !e.contains("params_billions"))
            fail(ErrorCategory::format, "catalog entry missing name or params_billions");
        expert.name = e["name"].get<std::string>();
        expert.params_billions = e["params_billions"].get<double>();
        expert.bytes_per_param = e.value("bytes_per_param", 2.0);
        if (e.contains("endpoint") && !e["endpoint"].is_null())
            expert.endpoint = e["endpoint"].get<std::string>();
        experts.push_back(std::move(expert));
    }
    return ExpertCatalog::from_experts(std::move(experts));
}

void save_catalog(const ExpertCatalog& catalog, const std::filesystem::path& path) {
    json list = json::array();
    for (const auto& e : catalog.experts) {
        json entry{{"name", e.name},
                   {"params_billions", e.params_billions},
                   {"bytes_per_param", e.bytes_per_param}};
        if (e.endpoint) entry["endpoint"] = *e.endpoint;
        list.push_back(std::move(entry));
    }
    auto out = open_output(path);
    out << json{{"experts", list}}.dump(2) << '\n';
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

// --- judgments ----------------------------------------------------------------------

std::vector<JudgmentRecord> load_judgments(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<JudgmentRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        json j = parse_line(line, path, lineno);
        JudgmentRecord rec;
        rec.prompt_id = require_string(j, "prompt_id", path, lineno);
        rec.expert = require_string(j, "expert", path, lineno);
        rec.verdict = parse_verdict(require_string(j, "verdict", path, lineno));
        records.push_back(std::move(rec));
    }
    return records;
}

void save_judgments(std::span<const JudgmentRecord> judgments, const std::filesystem::path& path) {
    auto out = open_output(path);
    for (const auto& rec : judgments) {
        out << json{{"prompt_id", rec.prompt_id},
                    {"expert", rec.expert},
                    {"verdict", to_string(rec.verdict)}}
                   .dump()
            << '\n';
    }
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

void validate_judgments(std::span<const JudgmentRecord> judgments,
                        std::span<const PromptRecord> prompts, const ExpertCatalog& catalog) {
    std::unordered_set<std::string> known;
    known.reserve(prompts.size());
    for (const auto& p : prompts) known.insert(p.id);
    for (const auto& j : judgments) {
        if (!known.count(j.prompt_id))
            fail(ErrorCategory::validation, "judgment for unknown prompt '" + j.prompt_id + "'");
        if (!catalog.index_of(j.expert))
            fail(ErrorCategory::validation, "judgment for unknown expert '" + j.expert + "'");
    }
}

// --- joins -----------------------------------------------------------------------------

AlignedCorpus join(std::span<const PromptRecord> prompts, const EmbeddingMatrix& embeddings) {
    AlignedCorpus corpus;
    std::vector<std::string> ids;
    std::vector<float> data;
    std::unordered_set<std::string> matched;
    for (const auto& p : prompts) {
        auto row = embeddings.row_of(p.id);
        if (!row) {
            ++corpus.unmatched_prompts;
            continue;
        }
        corpus.prompts.push_back(p);
        ids.push_back(p.id);
        auto r = embeddings.row(*row);
        data.insert(data.end(), r.begin(), r.end());
        matched.insert(p.id);
    }
    corpus.unmatched_embeddings = embeddings.rows() - matched.size();
    if (!ids.empty())
        corpus.embeddings = EmbeddingMatrix(std::move(ids), embeddings.dim(), std::move(data));
    return corpus;
}

AlignedCorpus filter_split(const AlignedCorpus& corpus, Split split) {
    AlignedCorpus out;
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < corpus.prompts.size(); ++i) {
        const auto& p = corpus.prompts[i];
        if (!p.split || *p.split != split) continue;
        out.prompts.push_back(p);
        ids.push_back(p.id);
        auto r = corpus.embeddings.row(i);
        data.insert(data.end(), r.begin(), r.end());
    }
    if (!ids.empty()) out.embeddings = EmbeddingMatrix(std::move(ids), corpus.embeddings.dim(), std::move(data));
    return out;
}

}  // namespace coe
