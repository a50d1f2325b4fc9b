#pragma once

// Flat "key = value" configuration files. Blank lines and lines starting
// with '#' are ignored; later keys override earlier ones.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace sevae {

using KeyValues = std::map<std::string, std::string>;

KeyValues read_config(std::istream& in, const std::string& source = "<stream>");
KeyValues load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const KeyValues& kv);

// Copies `overrides` onto `base`.
KeyValues merge_config(KeyValues base, const KeyValues& overrides);

// Removes and returns the entries whose keys appear in `keys`.
KeyValues take_keys(KeyValues& kv, const std::vector<std::string>& keys);

}  // namespace sevae
