#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "gantts/tensor.hpp"

namespace gantts {

// Named parameter map with deterministic (sorted) iteration order.
// Optimizer moments, spectral-norm u vectors and batch-norm statistics live
// in the same map under reserved '#'-suffixed paths (e.g. "w#adam_m",
// "cbn1#aux:running_mean"), so one file round-trips the whole training state.
class ParamStore {
public:
    using Map = std::map<std::string, Tensor>;

    Tensor& create(const std::string& path, Tensor t) {
        check(!path.empty(), "param store: empty path");
        auto [it, inserted] = map_.emplace(path, std::move(t));
        check(inserted, "param store: duplicate path '" + path + "'");
        return it->second;
    }

    bool contains(const std::string& path) const { return map_.count(path) > 0; }

    Tensor& get(const std::string& path) {
        auto it = map_.find(path);
        check(it != map_.end(), "param store: missing path '" + path + "'");
        return it->second;
    }
    const Tensor& get(const std::string& path) const {
        auto it = map_.find(path);
        check(it != map_.end(), "param store: missing path '" + path + "'");
        return it->second;
    }

    // Replace an existing entry (shape may change only for '#' state paths).
    void set(const std::string& path, Tensor t) {
        auto it = map_.find(path);
        check(it != map_.end(), "param store: set on missing path '" + path + "'");
        if (path.find('#') == std::string::npos)
            check(it->second.shape == t.shape, "param store: shape change for '" + path + "'");
        it->second = std::move(t);
    }

    Tensor& get_or_create(const std::string& path, std::vector<i64> shape) {
        auto it = map_.find(path);
        if (it != map_.end()) return it->second;
        return create(path, Tensor::zeros(std::move(shape)));
    }

    void erase_prefix(const std::string& prefix) {
        for (auto it = map_.begin(); it != map_.end();) {
            if (it->first.rfind(prefix, 0) == 0) it = map_.erase(it);
            else ++it;
        }
    }

    // Deep copy (fresh buffers); optionally restricted to parameter paths.
    ParamStore clone(bool params_only = false) const {
        ParamStore out;
        for (const auto& [path, t] : map_) {
            if (params_only && !is_param_path(path)) continue;
            out.map_.emplace(path, Tensor::from(t.shape, *t.data));
        }
        return out;
    }

    void erase_contains(const std::string& needle) {
        for (auto it = map_.begin(); it != map_.end();) {
            if (it->first.find(needle) != std::string::npos) it = map_.erase(it);
            else ++it;
        }
    }

    Map::const_iterator begin() const { return map_.begin(); }
    Map::const_iterator end() const { return map_.end(); }
    size_t size() const { return map_.size(); }

    // True parameters only (no '#'-suffixed state).
    static bool is_param_path(const std::string& path) {
        return path.find('#') == std::string::npos;
    }

    i64 total_param_elements() const {
        i64 n = 0;
        for (const auto& [path, t] : map_)
            if (is_param_path(path)) n += t.numel();
        return n;
    }

    // ------------------------------------------------------------------
    // Checkpoint file: magic "GTTS", u32 version, then per entry:
    // u32 path length, path bytes, u32 rank, u64 extents, f64 payload.
    // Little-endian throughout.
    // ------------------------------------------------------------------
    void save(const std::string& file) const {
        std::ofstream os(file, std::ios::binary | std::ios::trunc);
        check(os.good(), "param store: cannot open '" + file + "' for writing");
        os.write("GTTS", 4);
        write_u32(os, 1);
        for (const auto& [path, t] : map_) {
            write_u32(os, static_cast<u32>(path.size()));
            os.write(path.data(), static_cast<std::streamsize>(path.size()));
            write_u32(os, static_cast<u32>(t.rank()));
            for (i64 e : t.shape) write_u64(os, static_cast<u64>(e));
            os.write(reinterpret_cast<const char*>(t.raw()),
                     static_cast<std::streamsize>(t.numel() * 8));
        }
        check(os.good(), "param store: write failed for '" + file + "'");
    }

    static ParamStore load(const std::string& file) {
        std::ifstream is(file, std::ios::binary);
        check(is.good(), "param store: cannot open '" + file + "'");
        char magic[4];
        is.read(magic, 4);
        check(is.good() && std::memcmp(magic, "GTTS", 4) == 0,
              "param store: bad magic in '" + file + "'");
        const u32 version = read_u32(is, file);
        check(version == 1, "param store: unsupported version in '" + file + "'");
        ParamStore ps;
        while (true) {
            u32 plen;
            if (!try_read_u32(is, plen)) break;
            std::string path(plen, '\0');
            is.read(path.data(), plen);
            check(is.good(), "param store: truncated path in '" + file + "'");
            const u32 rank = read_u32(is, file);
            check(rank <= 8, "param store: implausible rank in '" + file + "'");
            std::vector<i64> shape;
            i64 numel = 1;
            for (u32 i = 0; i < rank; ++i) {
                const u64 e = read_u64(is, file);
                check(e > 0 && e < (1ull << 40), "param store: bad extent in '" + file + "'");
                shape.push_back(static_cast<i64>(e));
                numel *= static_cast<i64>(e);
            }
            Tensor t = Tensor::zeros(shape);
            is.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(numel * 8));
            check(is.good(), "param store: truncated payload for '" + path + "' in '" + file + "'");
            ps.create(path, std::move(t));
        }
        return ps;
    }

private:
    static void write_u32(std::ofstream& os, u32 v) {
        os.write(reinterpret_cast<const char*>(&v), 4);
    }
    static void write_u64(std::ofstream& os, u64 v) {
        os.write(reinterpret_cast<const char*>(&v), 8);
    }
    static u32 read_u32(std::ifstream& is, const std::string& file) {
        u32 v;
        is.read(reinterpret_cast<char*>(&v), 4);
        check(is.good(), "param store: truncated read in '" + file + "'");
        return v;
    }
    static bool try_read_u32(std::ifstream& is, u32& v) {
        is.read(reinterpret_cast<char*>(&v), 4);
        return is.gcount() == 4;
    }
    static u64 read_u64(std::ifstream& is, const std::string& file) {
        u64 v;
        is.read(reinterpret_cast<char*>(&v), 8);
        check(is.good(), "param store: truncated read in '" + file + "'");
        return v;
    }

    Map map_;
};

}  // namespace gantts
