#include "epiline/mask_io.hpp"

#include <bit>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "epiline/error.hpp"

namespace epiline {

namespace {

constexpr char kPackedMagic[4] = {'E', 'P', 'M', 'V'};
constexpr std::size_t kPackedHeaderSize = 16;

std::uint8_t reverse_bits(std::uint8_t b) {
  b = static_cast<std::uint8_t>((b & 0xF0) >> 4 | (b & 0x0F) << 4);
  b = static_cast<std::uint8_t>((b & 0xCC) >> 2 | (b & 0x33) << 2);
  return static_cast<std::uint8_t>((b & 0xAA) >> 1 | (b & 0x55) << 1);
}

std::size_t row_bytes(int width) { return (static_cast<std::size_t>(width) + 7) / 8; }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

// Skips whitespace and '#' comments in a PBM header.
void skip_pbm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

SilhouetteVideo::SilhouetteVideo(int width, int height, int num_frames)
    : width_(width), height_(height), num_frames_(num_frames) {
  if (width <= 0 || height <= 0 || num_frames <= 0) {
    throw FormatError("silhouette video needs positive width, height and frame count (got " +
                      std::to_string(width) + "x" + std::to_string(height) + "x" +
                      std::to_string(num_frames) + ")");
  }
  words_per_row_ = (static_cast<std::size_t>(width) + 63) / 64;
  bits_.assign(words_per_row_ * height * static_cast<std::size_t>(num_frames), 0);
}

std::size_t SilhouetteVideo::count_foreground(int frame) const {
  std::size_t total = 0;
  for (int y = 0; y < height_; ++y)
    for (auto w : row(frame, y)) total += std::popcount(w);
  return total;
}

std::string format_frame_path(const std::string& pattern, int index) {
  const auto pct = pattern.find('%');
  if (pct == std::string::npos) throw ConfigError("frame path pattern has no %d conversion: " + pattern);
  auto end = pct + 1;
  while (end < pattern.size() && (std::isdigit(static_cast<unsigned char>(pattern[end])) || pattern[end] == '0'))
    ++end;
  if (end >= pattern.size() || pattern[end] != 'd')
    throw ConfigError("frame path pattern must use an integer conversion like %04d: " + pattern);
  const std::string conversion = pattern.substr(pct, end - pct + 1);
  char buf[64];
  std::snprintf(buf, sizeof buf, conversion.c_str(), index);
  return pattern.substr(0, pct) + buf + pattern.substr(end + 1);
}

PbmImage read_pbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '4') throw FormatError(path.string() + ": not a binary PBM (P4) file");
  PbmImage img;
  skip_pbm_space(in);
  in >> img.width;
  skip_pbm_space(in);
  in >> img.height;
  if (!in || img.width <= 0 || img.height <= 0) throw FormatError(path.string() + ": bad PBM dimensions");
  in.get();  // single whitespace before raster
  const std::size_t rb = row_bytes(img.width);
  std::vector<char> raw(rb * img.height);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError(path.string() + ": truncated PBM raster at byte " + std::to_string(in.gcount()));
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto byte = static_cast<std::uint8_t>(raw[y * rb + x / 8]);
      img.pixels[static_cast<std::size_t>(y) * img.width + x] = (byte >> (7 - x % 8)) & 1;
    }
  return img;
}

void write_pbm(const std::filesystem::path& path, const SilhouetteVideo& video, int frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P4\n" << video.width() << ' ' << video.height() << '\n';
  const std::size_t rb = row_bytes(video.width());
  std::vector<char> row(rb);
  for (int y = 0; y < video.height(); ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < video.width(); ++x)
      if (video.get(frame, x, y)) row[x / 8] = static_cast<char>(row[x / 8] | (0x80 >> (x % 8)));
    out.write(row.data(), static_cast<std::streamsize>(rb));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SilhouetteVideo load_mask_sequence(const std::string& path_pattern, FrameRange range) {
  if (range.last <= range.first) throw ConfigError("empty frame range");
  SilhouetteVideo video;
  for (int index = range.first; index < range.last; ++index) {
    const std::string path = format_frame_path(path_pattern, index);
    if (!std::filesystem::exists(path))
      throw IoError("missing mask frame " + std::to_string(index) + ": " + path);
    const PbmImage img = read_pbm(path);
    const int frame = index - range.first;
    if (frame == 0) {
      video = SilhouetteVideo(img.width, img.height, range.last - range.first);
    } else if (img.width != video.width() || img.height != video.height()) {
      throw FormatError("mask frame " + std::to_string(frame) + " (" + path + ") is " + std::to_string(img.width) +
                        "x" + std::to_string(img.height) + ", expected " + std::to_string(video.width()) + "x" +
                        std::to_string(video.height()));
    }
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        if (img.pixels[static_cast<std::size_t>(y) * img.width + x]) video.set(frame, x, y, true);
  }
  return video;
}

void save_mask_sequence(const SilhouetteVideo& video, const std::string& path_pattern, int first_index) {
  for (int f = 0; f < video.num_frames(); ++f) write_pbm(format_frame_path(path_pattern, first_index + f), video, f);
}

std::vector<std::uint8_t> encode_packed(const SilhouetteVideo& video) {
  std::vector<std::uint8_t> out;
  const std::size_t rb = row_bytes(video.width());
  out.reserve(kPackedHeaderSize + rb * video.height() * video.num_frames());
  out.insert(out.end(), std::begin(kPackedMagic), std::end(kPackedMagic));
  put_u32(out, static_cast<std::uint32_t>(video.width()));
  put_u32(out, static_cast<std::uint32_t>(video.height()));
  put_u32(out, static_cast<std::uint32_t>(video.num_frames()));
  for (int f = 0; f < video.num_frames(); ++f)
    for (int y = 0; y < video.height(); ++y) {
      const auto words = video.row(f, y);
      for (std::size_t b = 0; b < rb; ++b) {
        // Packed words are LSB-first per pixel; container bytes are MSB-first.
        const auto byte = static_cast<std::uint8_t>(words[b / 8] >> (8 * (b % 8)));
        out.push_back(reverse_bits(byte));
      }
    }
  return out;
}

SilhouetteVideo decode_packed(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPackedHeaderSize)
    throw FormatError("packed video truncated in header at byte offset " + std::to_string(bytes.size()));
  if (!std::equal(std::begin(kPackedMagic), std::end(kPackedMagic), bytes.begin()))
    throw FormatError("packed video has bad magic at byte offset 0");
  const auto width = get_u32(bytes, 4), height = get_u32(bytes, 8), frames = get_u32(bytes, 12);
  if (width == 0 || height == 0 || frames == 0 || width > (1u << 20) || height > (1u << 20))
    throw FormatError("packed video has invalid dimensions at byte offset 4");
  const std::size_t rb = row_bytes(static_cast<int>(width));
  const std::size_t expected = kPackedHeaderSize + rb * height * static_cast<std::size_t>(frames);
  if (bytes.size() < expected)
    throw FormatError("packed video truncated at byte offset " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string(expected) + " bytes)");
  SilhouetteVideo video(static_cast<int>(width), static_cast<int>(height), static_cast<int>(frames));
  std::size_t pos = kPackedHeaderSize;
  const std::uint64_t tail_mask = (width % 64) ? ((1ULL << (width % 64)) - 1) : ~0ULL;
  for (int f = 0; f < video.num_frames(); ++f)
    for (int y = 0; y < video.height(); ++y) {
      auto words = video.row(f, y);
      for (std::size_t b = 0; b < rb; ++b) {
        const auto byte = static_cast<std::uint64_t>(reverse_bits(bytes[pos++]));
        words[b / 8] |= byte << (8 * (b % 8));
      }
      words.back() &= tail_mask;
    }
  return video;
}

void save_packed(const SilhouetteVideo& video, const std::filesystem::path& path) {
  const auto bytes = encode_packed(video);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

SilhouetteVideo load_packed(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_packed(bytes);
}

HeatMap compute_heat_map(const SilhouetteVideo& video, Exec exec) {
  HeatMap heat{video.width(), video.height(),
               std::vector<std::uint32_t>(static_cast<std::size_t>(video.width()) * video.height(), 0)};
  const int height = video.height();
  const auto accumulate_row = [&](int y) {
    std::uint32_t* out = heat.counts.data() + static_cast<std::size_t>(y) * video.width();
    for (int f = 0; f < video.num_frames(); ++f) {
      const auto words = video.row(f, y);
      for (std::size_t w = 0; w < words.size(); ++w) {
        std::uint64_t bits = words[w];
        while (bits) {
          ++out[w * 64 + std::countr_zero(bits)];
          bits &= bits - 1;
        }
      }
    }
  };
  if (exec == Exec::serial) {
    for (int y = 0; y < height; ++y) accumulate_row(y);
    return heat;
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) accumulate_row(y);
  return heat;
}

}  // namespace epiline
