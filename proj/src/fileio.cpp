#include "idea/fileio.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "idea/error.hpp"

namespace idea {

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string ReadFileText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileAtomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::kIo, "short write to " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot rename into " + path.string());
  }
}

void WriteFileAtomic(const std::filesystem::path& path, const std::string& text) {
  WriteFileAtomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::size_t> LoadLabels(const std::filesystem::path& path) {
  std::istringstream in(ReadFileText(path));
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t consumed = 0;
    unsigned long long value = 0;
    try {
      if (line.front() == '-') throw std::invalid_argument("negative");
      value = std::stoull(line, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != line.size()) {
      throw Error(ErrorCode::kFormat,
                  path.string() + ": line " + std::to_string(line_no) + " is not a class index");
    }
    labels.push_back(static_cast<std::size_t>(value));
  }
  return labels;
}

void SaveLabels(std::span<const std::size_t> labels, const std::filesystem::path& path) {
  std::string text;
  for (std::size_t label : labels) {
    text += std::to_string(label);
    text += '\n';
  }
  WriteFileAtomic(path, text);
}

}  // namespace idea
