#include "mad/dataset.hpp"

#include "mad/util.hpp"

#include "json.hpp"

#include <fstream>
#include <set>

namespace mad {

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

LabelMap LabelMap::promise_default() {
    LabelMap m;
    m.mapping_["F"] = "F";
    m.mapping_["NF"] = "NF";
    // PROMISE NFR subtypes: availability, fault tolerance, legal, look & feel,
    // maintainability, operational, performance, portability, scalability,
    // security, usability.
    for (const char* subtype : {"A", "FT", "L", "LF", "MN", "O", "PE", "PO", "SC", "SE", "US"}) {
        m.mapping_[subtype] = "NF";
    }
    return m;
}

LabelMap LabelMap::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open label map: " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError("malformed label map " + file.string() + ": " + ex.what());
    }
    if (!j.is_object()) throw DataError("label map must be a JSON object: " + file.string());
    LabelMap m;
    for (const auto& item : j.items()) {
        std::string target = item.value().get<std::string>();
        if (target != "F" && target != "NF") {
            throw DataError("label map " + file.string() + ": '" + item.key() +
                            "' maps to '" + target + "', expected F or NF");
        }
        m.mapping_[upper(item.key())] = target;
    }
    return m;
}

std::optional<std::string> LabelMap::map(std::string_view raw) const {
    auto it = mapping_.find(upper(util::trim(raw)));
    if (it == mapping_.end()) return std::nullopt;
    return it->second;
}

Dataset load_dataset(const std::filesystem::path& file, const LabelMap& labels) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + file.string());

    auto rows = util::read_csv(in);
    if (rows.empty()) {
        throw DataError("dataset " + file.string() + ": missing header row");
    }
    const auto& header = rows.front();
    if (header.size() != 3 || util::trim(header[0]) != "id" ||
        util::trim(header[1]) != "text" || util::trim(header[2]) != "label") {
        throw DataError("dataset " + file.string() + ": header must be id,text,label");
    }

    Dataset dataset;
    dataset.name = file.stem().string();
    std::set<std::string> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const std::string where = "row " + std::to_string(i + 1);
        if (row.size() != 3) {
            throw DataError("dataset " + file.string() + ": " + where + " has " +
                            std::to_string(row.size()) + " fields, expected 3");
        }
        LabeledRequirement item;
        item.id = util::trim(row[0]);
        item.text = row[1];
        if (item.id.empty()) {
            throw DataError("dataset " + file.string() + ": " + where + " has an empty id");
        }
        if (!seen.insert(item.id).second) {
            throw DataError("dataset " + file.string() + ": " + where +
                            " duplicates id '" + item.id + "'");
        }
        if (util::trim(item.text).empty()) {
            throw DataError("dataset " + file.string() + ": " + where + " (id '" +
                            item.id + "') has empty text");
        }
        auto mapped = labels.map(row[2]);
        if (!mapped) {
            throw DataError("dataset " + file.string() + ": " + where + " (id '" +
                            item.id + "') has unmappable label '" + row[2] + "'");
        }
        item.gold = *mapped;
        dataset.items.push_back(std::move(item));
    }
    return dataset;
}

}  // namespace mad
