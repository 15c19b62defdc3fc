#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mad::util {

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::string trim(std::string_view s);

/// Replaces every occurrence of `key`, single pass (inserted text is not
/// rescanned).
std::string replace_all(std::string_view text, std::string_view key,
                        std::string_view value);

/// Whitespace-delimited tokens.
std::vector<std::string> split_words(std::string_view s);

/// First `max_words` words joined by single spaces; appends the ellipsis
/// marker " ..." when anything was cut. `truncated` reports whether it was.
std::string truncate_words(const std::string& text, int max_words,
                           bool* truncated = nullptr);

bool is_word_char(char c);

/// Case-insensitive search for `token` delimited by non-word characters on
/// both sides. Returns the offset of the last such occurrence.
std::optional<std::size_t> rfind_word_token(std::string_view text,
                                            std::string_view token);

/// Case-insensitive substring search (no word-boundary requirement).
bool icontains(std::string_view haystack, std::string_view needle);

std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

std::string iso8601_utc(std::chrono::system_clock::time_point tp);

// RFC 4180 CSV. Rows may contain quoted fields with embedded commas,
// doubled quotes, and newlines. Handles both LF and CRLF input.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::string csv_field(const std::string& value);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// Runs fn(0..n-1) on up to `workers` threads. Rethrows the exception of the
/// lowest index that failed, after all workers have drained.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mad::util
