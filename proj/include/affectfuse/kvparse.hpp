// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace affectfuse::kv {

// Flat "section.key = value" text. Blank lines and lines starting with '#'
// are skipped. Duplicate keys and malformed lines are ConfigErrors naming
// the offender.
std::vector<std::pair<std::string, std::string>> parse_flat(const std::string& text);

// Canonical value formatting used for hashing and file embedding: the same
// logical config always produces byte-identical text.
std::string fmt_double(double v);   // %.17g round-trip form
std::string fmt_int(int64_t v);
std::string fmt_bool(bool v);
std::string fmt_int_list(const std::vector<int>& v);  // comma separated
std::string fmt_double_list(const std::vector<double>& v);
std::string fmt_hex64(uint64_t v);  // 16 lowercase hex digits, zero padded

// Typed parsers; each throws ConfigError naming `key` on bad input.
double parse_double(const std::string& key, const std::string& value);
int64_t parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<int> parse_int_list(const std::string& key, const std::string& value);
std::vector<double> parse_double_list(const std::string& key, const std::string& value);

}  // namespace affectfuse::kv
