#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mad {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LabeledRequirement {
    std::string id;
    std::string text;
    std::string gold;  // "F" or "NF"
};

struct Dataset {
    std::string name;
    std::vector<LabeledRequirement> items;
};

/// Maps raw dataset labels (upper-cased) onto the task's binary labels.
class LabelMap {
public:
    /// F stays F; every PROMISE NFR subtype collapses to NF.
    static LabelMap promise_default();

    /// JSON object {"RAW": "F"|"NF", ...}.
    static LabelMap load(const std::filesystem::path& file);

    /// Case-insensitive lookup; nullopt when the label is unknown.
    std::optional<std::string> map(std::string_view raw) const;

private:
    std::map<std::string, std::string> mapping_;
};

/// Reads a CSV with header id,text,label. Labels are normalized through the
/// map. Throws DataError naming the row for duplicate ids, empty texts and
/// unmappable labels.
Dataset load_dataset(const std::filesystem::path& file,
                     const LabelMap& labels = LabelMap::promise_default());

}  // namespace mad
