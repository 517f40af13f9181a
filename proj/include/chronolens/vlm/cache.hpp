#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/png_io.hpp"

namespace chronolens::vlm {

namespace fs = std::filesystem;

/// One cached backend response: text for describe, image for edit, plus the
/// metadata stored next to it.
struct CacheEntry {
  std::string text;
  std::optional<scene::RgbFrame> image;
  nlohmann::json meta;
};

/// Content-addressed response store. Layout on disk:
///   <dir>/<backend_id>/<inputs_hash>.txt|.png   payload
///   <dir>/<backend_id>/<inputs_hash>.json       metadata, written last
/// Without a directory the cache is memory-only. Concurrent requests for the
/// same key share one producer call.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<fs::path> dir = std::nullopt) : dir_(std::move(dir)) {
    if (dir_) {
      std::error_code ec;
      fs::create_directories(*dir_, ec);
      if (ec || !fs::is_directory(*dir_)) throw DataError("cache_dir: cannot create " + dir_->string());
    }
  }

  struct Lookup {
    CacheEntry entry;
    bool from_cache = false;
  };

  using Producer = std::function<CacheEntry()>;

  Lookup text(const std::string& backend_id, const std::string& hash, const Producer& produce) {
    return get(backend_id, hash, false, produce);
  }

  Lookup image(const std::string& backend_id, const std::string& hash, const Producer& produce) {
    return get(backend_id, hash, true, produce);
  }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  const std::optional<fs::path>& directory() const { return dir_; }

 private:
  Lookup get(const std::string& backend_id, const std::string& hash, bool is_image, const Producer& produce) {
    const std::string key = backend_id + "/" + hash + (is_image ? ".png" : ".txt");
    std::promise<CacheEntry> promise;
    {
      std::unique_lock lock(mu_);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        auto fut = it->second;
        lock.unlock();
        ++hits_;
        return {fut.get(), true};
      }
      entries_.emplace(key, promise.get_future().share());
    }
    try {
      if (auto stored = load(backend_id, hash, is_image)) {
        ++hits_;
        promise.set_value(*stored);
        return {std::move(*stored), true};
      }
      CacheEntry fresh = produce();
      ++misses_;
      store(backend_id, hash, is_image, fresh);
      promise.set_value(fresh);
      return {std::move(fresh), false};
    } catch (...) {
      {
        std::lock_guard lock(mu_);
        entries_.erase(key);
      }
      promise.set_exception(std::current_exception());
      throw;
    }
  }

  fs::path payload_path(const std::string& backend_id, const std::string& hash, bool is_image) const {
    return *dir_ / backend_id / (hash + (is_image ? ".png" : ".txt"));
  }

  std::optional<CacheEntry> load(const std::string& backend_id, const std::string& hash, bool is_image) const {
    if (!dir_) return std::nullopt;
    const fs::path payload = payload_path(backend_id, hash, is_image);
    const fs::path meta = *dir_ / backend_id / (hash + ".json");
    if (!fs::exists(payload) || !fs::exists(meta)) return std::nullopt;
    CacheEntry e;
    try {
      const auto bytes = scene::read_file_bytes(payload);
      if (is_image) {
        e.image = scene::decode_rgb_png(bytes);
      } else {
        e.text.assign(bytes.begin(), bytes.end());
      }
      std::ifstream in(meta);
      e.meta = nlohmann::json::parse(in);
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable entries are treated as misses and overwritten
    }
    return e;
  }

  void store(const std::string& backend_id, const std::string& hash, bool is_image, const CacheEntry& e) const {
    if (!dir_) return;
    const fs::path sub = *dir_ / backend_id;
    fs::create_directories(sub);
    if (is_image) {
      if (!e.image) throw UsageError("cache: image entry without image");
      atomic_write(payload_path(backend_id, hash, true), scene::encode_rgb_png(*e.image));
    } else {
      atomic_write(payload_path(backend_id, hash, false), std::vector<std::uint8_t>(e.text.begin(), e.text.end()));
    }
    const std::string meta = e.meta.dump(2) + "\n";
    atomic_write(sub / (hash + ".json"), std::vector<std::uint8_t>(meta.begin(), meta.end()));
  }

  static void atomic_write(const fs::path& target, const std::vector<std::uint8_t>& bytes) {
    std::ostringstream suffix;
    suffix << ".tmp." << std::this_thread::get_id();
    fs::path tmp = target;
    tmp += suffix.str();
    scene::write_file_bytes(tmp, bytes);
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw DataError("cache: cannot write " + target.string());
    }
  }

  std::optional<fs::path> dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<CacheEntry>> entries_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace chronolens::vlm
