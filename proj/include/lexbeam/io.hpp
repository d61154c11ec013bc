#pragma once

// JSON and text formats shared by the command-line tool and tests.

#include <lexbeam/error.hpp>
#include <lexbeam/filter.hpp>
#include <lexbeam/fsm.hpp>
#include <lexbeam/sampler.hpp>
#include <lexbeam/scorers.hpp>
#include <lexbeam/vocabulary.hpp>

#include <json.hpp>

#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lexbeam::io {

using nlohmann::json;

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoFailure, "cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Non-blank lines, trailing CR and surrounding spaces removed.
inline std::vector<std::string> read_lines(const std::string& path)
{
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            continue;
        }
        const auto last = line.find_last_not_of(" \t\r");
        lines.push_back(line.substr(first, last - first + 1));
    }
    return lines;
}

inline json parse(const std::string& text, const std::string& where)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, where + ": " + e.what());
    }
}

/// One JSON value per non-blank line.
inline std::vector<json> read_json_lines(const std::string& path)
{
    std::vector<json> records;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        records.push_back(parse(line, path + " line " + std::to_string(++n)));
    }
    return records;
}

/// A whole-file JSON array, or JSON-lines when the file is not one document.
inline std::vector<json> read_records(const std::string& path)
{
    const std::string text = read_file(path);
    json doc = json::parse(text, nullptr, false);
    if (!doc.is_discarded()) {
        if (doc.is_array()) {
            return doc.get<std::vector<json>>();
        }
        return {doc};
    }
    return read_json_lines(path);
}

template <class T>
T field(const json& j, const char* key, const std::string& where)
{
    if (!j.is_object() || !j.contains(key)) {
        fail(ErrorCode::ParseError, where + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, where + ": field '" + key + "': " + e.what());
    }
}

// -- constraints ----------------------------------------------------------

struct ConstraintSet {
    std::optional<std::string> image_id;
    std::size_t min_satisfied = 0;
    std::vector<PhraseGroup> groups;
};

inline ConstraintSet constraints_from_json(const json& j, const std::string& where = "constraints")
{
    ConstraintSet out;
    if (j.contains("image_id")) {
        out.image_id = field<std::string>(j, "image_id", where);
    }
    const auto min_satisfied = field<long long>(j, "min_satisfied", where);
    if (min_satisfied < 0) {
        fail(ErrorCode::InvalidQuota, where + ": min_satisfied must be non-negative");
    }
    out.min_satisfied = static_cast<std::size_t>(min_satisfied);
    for (const auto& g : field<std::vector<json>>(j, "groups", where)) {
        PhraseGroup group;
        group.label = g.contains("label") ? field<std::string>(g, "label", where) : std::string{};
        group.alternatives = field<std::vector<std::vector<std::string>>>(g, "alternatives", where);
        out.groups.push_back(std::move(group));
    }
    return out;
}

inline json to_json(const ConstraintSet& c)
{
    json j = json::object();
    if (c.image_id) {
        j["image_id"] = *c.image_id;
    }
    j["min_satisfied"] = c.min_satisfied;
    j["groups"] = json::array();
    for (const auto& g : c.groups) {
        j["groups"].push_back({{"label", g.label}, {"alternatives", g.alternatives}});
    }
    return j;
}

// -- vocabulary and scorer ------------------------------------------------

/// Plain text (one token per line) or JSON: an array of tokens or an object
/// with a "vocab" array, such as a bigram model file.
inline Vocabulary load_vocabulary(const std::string& path)
{
    const std::string text = read_file(path);
    json doc = json::parse(text, nullptr, false);
    if (!doc.is_discarded() && (doc.is_array() || doc.is_object())) {
        if (doc.is_object()) {
            return Vocabulary(field<std::vector<std::string>>(doc, "vocab", path));
        }
        try {
            return Vocabulary(doc.get<std::vector<std::string>>());
        } catch (const json::exception& e) {
            fail(ErrorCode::ParseError, path + ": " + e.what());
        }
    }
    return Vocabulary(read_lines(path));
}

inline json to_json(const BigramModel& model)
{
    const auto& vocab = model.vocabulary();
    json counts = json::array();
    for (const auto& c : model.counts()) {
        counts.push_back(json::array({vocab.token(c.context), vocab.token(c.next), c.count}));
    }
    return {{"vocab", vocab.user_tokens()}, {"alpha", model.alpha()}, {"counts", counts}};
}

inline BigramModel bigram_from_json(const json& j, const std::string& where = "model")
{
    Vocabulary vocab(field<std::vector<std::string>>(j, "vocab", where));
    const double alpha = j.contains("alpha") ? field<double>(j, "alpha", where) : 1.0;
    std::vector<BigramCount> counts;
    for (const auto& triple : field<std::vector<json>>(j, "counts", where)) {
        if (!triple.is_array() || triple.size() != 3) {
            fail(ErrorCode::ParseError, where + ": count entries must be [context, next, count]");
        }
        try {
            const auto c = triple[2].get<long long>();
            if (c < 0) {
                fail(ErrorCode::ParseError, where + ": negative bigram count");
            }
            counts.push_back({vocab.id(triple[0].get<std::string>()), vocab.id(triple[1].get<std::string>()),
                              static_cast<std::uint64_t>(c)});
        } catch (const json::exception& e) {
            fail(ErrorCode::ParseError, where + ": " + e.what());
        }
    }
    return BigramModel(std::move(vocab), counts, alpha);
}

inline BigramModel load_bigram(const std::string& path)
{
    return bigram_from_json(parse(read_file(path), path), path);
}

// -- detections, hierarchy, blacklist ------------------------------------

struct DetectionRecord {
    std::string image_id;
    std::vector<Detection> detections;
};

inline DetectionRecord detections_from_json(const json& j, const std::string& where = "detections")
{
    DetectionRecord rec;
    rec.image_id = field<std::string>(j, "image_id", where);
    for (const auto& d : field<std::vector<json>>(j, "detections", where)) {
        Detection det;
        det.class_name = field<std::string>(d, "class", where);
        det.confidence = field<double>(d, "score", where);
        const auto box = field<std::vector<double>>(d, "box", where);
        if (box.size() != 4) {
            fail(ErrorCode::ParseError, where + ": box must be [x0, y0, x1, y1]");
        }
        det.box = {box[0], box[1], box[2], box[3]};
        rec.detections.push_back(std::move(det));
    }
    return rec;
}

inline ClassHierarchy load_hierarchy(const std::string& path)
{
    std::vector<ClassEntry> entries;
    for (const auto& r : read_records(path)) {
        ClassEntry e;
        e.name = field<std::string>(r, "class", path);
        if (r.contains("parent") && !r.at("parent").is_null()) {
            e.parent = field<std::string>(r, "parent", path);
        }
        e.forms = field<std::vector<std::vector<std::string>>>(r, "forms", path);
        entries.push_back(std::move(e));
    }
    return ClassHierarchy(entries);
}

inline Blacklist load_blacklist(const std::string& path)
{
    return Blacklist(read_lines(path));
}

// -- images, domains, captions --------------------------------------------

inline Rotation rotation_from_string(const std::string& s, const std::string& where)
{
    if (s == "zero") {
        return Rotation::zero;
    }
    if (s == "nonzero") {
        return Rotation::nonzero;
    }
    if (s == "unknown") {
        return Rotation::unknown;
    }
    fail(ErrorCode::ParseError, where + ": rotation must be zero, nonzero or unknown, got '" + s + "'");
}

inline ImageRecord image_from_json(const json& j, const std::string& where = "images")
{
    ImageRecord img;
    img.image_id = field<std::string>(j, "image_id", where);
    for (auto& c : field<std::vector<std::string>>(j, "classes", where)) {
        img.classes.insert(std::move(c));
    }
    img.rotation = j.contains("rotation") && !j.at("rotation").is_null()
                       ? rotation_from_string(field<std::string>(j, "rotation", where), where)
                       : Rotation::unknown;
    return img;
}

inline DomainSpec domain_from_json(const json& j, const std::string& where = "domain")
{
    auto set_of = [&](const char* key) {
        auto v = j.contains(key) ? field<std::vector<std::string>>(j, key, where) : std::vector<std::string>{};
        return std::set<std::string>(v.begin(), v.end());
    };
    DomainSpec spec{set_of("in_domain"), set_of("out_of_domain"), set_of("ignored")};
    spec.validate();
    return spec;
}

/// Captions of one record: a "caption" string or a "captions" array.
inline std::vector<std::string> captions_from_json(const json& j, const std::string& where = "captions")
{
    if (j.is_string()) {
        return {j.get<std::string>()};
    }
    if (j.is_object() && j.contains("caption")) {
        return {field<std::string>(j, "caption", where)};
    }
    return field<std::vector<std::string>>(j, "captions", where);
}

} // namespace lexbeam::io
