#pragma once

#include <sstream>

namespace comicreid {

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn)
{
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            fn(Json::parse(line));
        } catch (const Json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

} // namespace comicreid
