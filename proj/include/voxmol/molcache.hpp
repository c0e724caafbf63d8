#pragma once

// MOLC: many small structures packed into one memory-mappable file.
//
//   "MOLC" | u32 version (1) | u64 entry count
//   entries:  u16 name length | name (UTF-8) | u32 natoms | natoms x (u8 element, 3 x f32 x/y/z)
//   index:    per entry, sorted by name: u16 name length | name | u64 entry offset
//   footer:   u64 index offset
//
// All integers and floats are little-endian.

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bytes.hpp"
#include "chem_io.hpp"
#include "error.hpp"
#include "log.hpp"

namespace voxmol {

namespace molc {
inline constexpr char magic[4] = {'M', 'O', 'L', 'C'};
inline constexpr std::uint32_t version = 1;
inline constexpr std::size_t header_size = 16;
inline constexpr std::size_t footer_size = 8;
inline constexpr std::size_t atom_record_size = 13;
}  // namespace molc

/// Serialize molecules into MOLC bytes. Duplicate names keep the last
/// occurrence (with a warning) at the position of the first.
inline std::string encode_cache(std::span<const RawMolecule> molecules) {
  std::vector<const RawMolecule*> unique;
  std::map<std::string_view, std::size_t> slot;
  for (const auto& m : molecules) {
    if (m.name.size() > 0xFFFF) throw ArgumentError("molecule name longer than 65535 bytes");
    auto [it, inserted] = slot.emplace(m.name, unique.size());
    if (inserted) {
      unique.push_back(&m);
    } else {
      warn("duplicate cache entry '" + m.name + "', keeping the last one");
      unique[it->second] = &m;
    }
  }

  std::string out;
  out.append(molc::magic, 4);
  bytes::put_le<std::uint32_t>(out, molc::version);
  bytes::put_le<std::uint64_t>(out, unique.size());

  std::vector<std::pair<std::string_view, std::uint64_t>> index;
  index.reserve(unique.size());
  for (const RawMolecule* m : unique) {
    if (m->atoms.size() > 0xFFFFFFFFu) throw ArgumentError("too many atoms for cache entry " + m->name);
    index.emplace_back(m->name, out.size());
    bytes::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(m->name.size()));
    out += m->name;
    bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->atoms.size()));
    for (const auto& a : m->atoms) {
      out.push_back(static_cast<char>(a.element));
      bytes::put_le<float>(out, a.position.x);
      bytes::put_le<float>(out, a.position.y);
      bytes::put_le<float>(out, a.position.z);
    }
  }

  std::ranges::sort(index);
  const std::uint64_t index_offset = out.size();
  for (const auto& [name, off] : index) {
    bytes::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    bytes::put_le<std::uint64_t>(out, off);
  }
  bytes::put_le<std::uint64_t>(out, index_offset);
  return out;
}

inline void write_cache(std::span<const RawMolecule> molecules, const std::string& path) {
  const std::string data = encode_cache(molecules);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("write failed: " + path);
}

namespace detail {

// Read-only mapping of a whole file. An empty file maps to an empty span.
class MappedFile {
 public:
  MappedFile() = default;
  explicit MappedFile(const std::string& path) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw IoError("cannot open cache " + path + ": " + std::strerror(errno));
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      throw IoError("cannot stat cache " + path);
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
      if (p == MAP_FAILED) {
        ::close(fd);
        throw IoError("cannot mmap cache " + path + ": " + std::strerror(errno));
      }
      data_ = static_cast<const unsigned char*>(p);
    }
    ::close(fd);
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;
  MappedFile(MappedFile&& o) noexcept : data_(std::exchange(o.data_, nullptr)), size_(std::exchange(o.size_, 0)) {}
  MappedFile& operator=(MappedFile&& o) noexcept {
    if (this != &o) {
      reset();
      data_ = std::exchange(o.data_, nullptr);
      size_ = std::exchange(o.size_, 0);
    }
    return *this;
  }
  ~MappedFile() { reset(); }

  void reset() {
    if (data_) ::munmap(const_cast<unsigned char*>(data_), size_);
    data_ = nullptr;
    size_ = 0;
  }
  std::span<const unsigned char> bytes() const { return {data_, size_}; }

 private:
  const unsigned char* data_ = nullptr;
  std::size_t size_ = 0;
};

}  // namespace detail

/// Memory-mapped MOLC reader. Lookups go through the sorted index and only
/// touch the requested entry. Concurrent lookups are safe; close() is not.
class StructureCache {
 public:
  StructureCache() = default;

  static StructureCache open(const std::string& path) {
    StructureCache cache;
    cache.path_ = path;
    cache.file_ = detail::MappedFile(path);
    cache.load_index();
    cache.open_ = true;
    return cache;
  }

  bool is_open() const { return open_; }
  std::size_t size() const { return index_.size(); }
  const std::string& path() const { return path_; }

  void close() {
    index_.clear();
    file_.reset();
    open_ = false;
  }

  std::vector<std::string> names() const {
    require_open();
    std::vector<std::string> out;
    for (const auto& e : index_) out.emplace_back(e.name);
    return out;
  }

  bool contains(std::string_view name) const {
    require_open();
    return find(name) != nullptr;
  }

  RawMolecule lookup(std::string_view name) const {
    require_open();
    const Entry* e = find(name);
    if (!e) throw KeyError("no cache entry named '" + std::string(name) + "' in " + path_);
    const unsigned char* p = file_.bytes().data() + e->offset;
    const auto name_len = bytes::get_le<std::uint16_t>(p);
    p += 2 + name_len;
    const auto natoms = bytes::get_le<std::uint32_t>(p);
    p += 4;
    RawMolecule mol;
    mol.name = std::string(name);
    mol.atoms.resize(natoms);
    for (auto& a : mol.atoms) {
      a.element = p[0];
      a.position = {bytes::get_le<float>(p + 1), bytes::get_le<float>(p + 5), bytes::get_le<float>(p + 9)};
      p += molc::atom_record_size;
    }
    return mol;
  }

 private:
  struct Entry {
    std::string_view name;  // points into the mapping
    std::uint64_t offset;
  };

  void require_open() const {
    if (!open_) throw UsageError("structure cache is closed");
  }

  const Entry* find(std::string_view name) const {
    auto it = std::ranges::lower_bound(index_, name, {}, &Entry::name);
    return it != index_.end() && it->name == name ? &*it : nullptr;
  }

  void load_index() {
    const auto data = file_.bytes();
    const std::size_t n = data.size();
    if (n < molc::header_size + molc::footer_size) throw FormatError(path_ + ": truncated cache file");
    if (std::memcmp(data.data(), molc::magic, 4) != 0) throw FormatError(path_ + ": bad magic, not a MOLC cache");
    const auto ver = bytes::get_le<std::uint32_t>(data.data() + 4);
    if (ver != molc::version) throw FormatError(path_ + ": unsupported cache version " + std::to_string(ver));
    const auto count = bytes::get_le<std::uint64_t>(data.data() + 8);
    const auto index_offset = bytes::get_le<std::uint64_t>(data.data() + n - molc::footer_size);
    if (index_offset < molc::header_size || index_offset > n - molc::footer_size)
      throw FormatError(path_ + ": truncated cache file (index offset out of range)");

    // each index record is at least 10 bytes
    if (count > (n - molc::footer_size - index_offset) / 10) throw FormatError(path_ + ": truncated cache index");
    index_.reserve(count);
    std::size_t pos = index_offset;
    const std::size_t index_end = n - molc::footer_size;
    for (std::uint64_t i = 0; i < count; ++i) {
      if (pos + 2 > index_end) throw FormatError(path_ + ": truncated cache index");
      const auto len = bytes::get_le<std::uint16_t>(data.data() + pos);
      if (pos + 2 + len + 8 > index_end) throw FormatError(path_ + ": truncated cache index");
      std::string_view name(reinterpret_cast<const char*>(data.data() + pos + 2), len);
      const auto off = bytes::get_le<std::uint64_t>(data.data() + pos + 2 + len);
      pos += 2 + len + 8;
      check_entry(name, off, index_offset);
      index_.push_back({name, off});
    }
    if (!std::ranges::is_sorted(index_, {}, &Entry::name)) throw FormatError(path_ + ": cache index is not sorted");
  }

  void check_entry(std::string_view name, std::uint64_t off, std::uint64_t entries_end) const {
    const auto data = file_.bytes();
    if (off < molc::header_size || off + 2 > entries_end) throw FormatError(path_ + ": entry offset out of range");
    const auto len = bytes::get_le<std::uint16_t>(data.data() + off);
    if (off + 2 + len + 4 > entries_end) throw FormatError(path_ + ": truncated cache entry");
    if (std::string_view(reinterpret_cast<const char*>(data.data() + off + 2), len) != name)
      throw FormatError(path_ + ": index name does not match entry at offset " + std::to_string(off));
    const auto natoms = bytes::get_le<std::uint32_t>(data.data() + off + 2 + len);
    if (off + 2 + len + 4 + std::uint64_t{natoms} * molc::atom_record_size > entries_end)
      throw FormatError(path_ + ": truncated cache entry '" + std::string(name) + "'");
  }

  std::string path_;
  detail::MappedFile file_;
  std::vector<Entry> index_;
  bool open_ = false;
};

inline StructureCache read_cache(const std::string& path) { return StructureCache::open(path); }

inline RawMolecule cache_lookup(const StructureCache& cache, std::string_view name) { return cache.lookup(name); }

}  // namespace voxmol
