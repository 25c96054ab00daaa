// Copyright 2026 The sold Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container: magic "SOLDCKPT", format version, named
// little-endian records, trailing FNV-1a checksum over the whole file.
// Also the protein-embedding reader ("SOLDEMB" binary or CSV fallback).

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sold/error.hpp"
#include "sold/rng.hpp"
#include "sold/tensor.hpp"

namespace sold::io {

inline constexpr uint32_t kCheckpointVersion = 1;

enum class RecordType : uint8_t { F32 = 0, F64 = 1, Bytes = 2, I64 = 3 };

struct Record {
    RecordType type = RecordType::Bytes;
    std::vector<long> shape;
    std::string payload;  // raw little-endian bytes
};

class Archive {
public:
    bool has(const std::string& name) const { return records_.count(name) > 0; }

    void put_tensor(const std::string& name, const nn::Tensor<float>& t) {
        Record r;
        r.type = RecordType::F32;
        r.shape = t.shape();
        r.payload.assign(reinterpret_cast<const char*>(t.data()), sizeof(float) * static_cast<size_t>(t.numel()));
        records_[name] = std::move(r);
    }

    void put_doubles(const std::string& name, const std::vector<double>& v) {
        Record r;
        r.type = RecordType::F64;
        r.shape = {static_cast<long>(v.size())};
        r.payload.assign(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
        records_[name] = std::move(r);
    }

    void put_i64(const std::string& name, const std::vector<int64_t>& v) {
        Record r;
        r.type = RecordType::I64;
        r.shape = {static_cast<long>(v.size())};
        r.payload.assign(reinterpret_cast<const char*>(v.data()), sizeof(int64_t) * v.size());
        records_[name] = std::move(r);
    }

    void put_string(const std::string& name, const std::string& s) {
        Record r;
        r.type = RecordType::Bytes;
        r.shape = {static_cast<long>(s.size())};
        r.payload = s;
        records_[name] = std::move(r);
    }

    nn::Tensor<float> tensor(const std::string& name) const {
        const auto& r = fetch(name, RecordType::F32);
        nn::Tensor<float> t(r.shape);
        std::memcpy(t.data(), r.payload.data(), r.payload.size());
        return t;
    }

    std::vector<double> doubles(const std::string& name) const {
        const auto& r = fetch(name, RecordType::F64);
        std::vector<double> v(r.payload.size() / sizeof(double));
        std::memcpy(v.data(), r.payload.data(), r.payload.size());
        return v;
    }

    std::vector<int64_t> i64(const std::string& name) const {
        const auto& r = fetch(name, RecordType::I64);
        std::vector<int64_t> v(r.payload.size() / sizeof(int64_t));
        std::memcpy(v.data(), r.payload.data(), r.payload.size());
        return v;
    }

    std::string str(const std::string& name) const { return fetch(name, RecordType::Bytes).payload; }

    std::string serialize() const {
        std::string out = "SOLDCKPT";
        append_u32(out, kCheckpointVersion);
        append_u32(out, static_cast<uint32_t>(records_.size()));
        for (const auto& [name, r] : records_) {
            append_u16(out, static_cast<uint16_t>(name.size()));
            out += name;
            out.push_back(static_cast<char>(r.type));
            out.push_back(static_cast<char>(r.shape.size()));
            for (long d : r.shape) append_u32(out, static_cast<uint32_t>(d));
            append_u64(out, r.payload.size());
            out += r.payload;
        }
        append_u64(out, fnv1a64(out.data(), out.size()));
        return out;
    }

    static Archive deserialize(const std::string& data) {
        if (data.size() < 28 || data.compare(0, 8, "SOLDCKPT") != 0)
            fail(Errc::IoError, "not a SOLDCKPT file");
        const uint64_t stored = read_u64(data, data.size() - 8);
        if (fnv1a64(data.data(), data.size() - 8) != stored)
            fail(Errc::IoError, "checkpoint checksum mismatch");
        size_t pos = 8;
        const uint32_t version = read_u32(data, pos);
        pos += 4;
        if (version != kCheckpointVersion) fail(Errc::CheckpointIncompatible, "unknown checkpoint version");
        const uint32_t count = read_u32(data, pos);
        pos += 4;
        Archive a;
        for (uint32_t i = 0; i < count; ++i) {
            const uint16_t name_len = read_u16(data, pos);
            pos += 2;
            std::string name = data.substr(pos, name_len);
            pos += name_len;
            Record r;
            r.type = static_cast<RecordType>(data[pos]);
            const int rank = static_cast<unsigned char>(data[pos + 1]);
            pos += 2;
            for (int d = 0; d < rank; ++d) {
                r.shape.push_back(static_cast<long>(read_u32(data, pos)));
                pos += 4;
            }
            const uint64_t len = read_u64(data, pos);
            pos += 8;
            if (pos + len > data.size() - 8) fail(Errc::IoError, "truncated checkpoint record");
            r.payload = data.substr(pos, len);
            pos += len;
            a.records_[name] = std::move(r);
        }
        return a;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) fail(Errc::IoError, "cannot open for write: " + path);
        auto s = serialize();
        f.write(s.data(), static_cast<std::streamsize>(s.size()));
        if (!f) fail(Errc::IoError, "short write: " + path);
    }

    static Archive load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) fail(Errc::IoError, "cannot open: " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        return deserialize(ss.str());
    }

    const std::map<std::string, Record>& records() const { return records_; }

private:
    const Record& fetch(const std::string& name, RecordType want) const {
        auto it = records_.find(name);
        if (it == records_.end()) fail(Errc::IoError, "missing checkpoint record: " + name);
        if (it->second.type != want) fail(Errc::IoError, "record type mismatch: " + name);
        return it->second;
    }

    static void append_u16(std::string& s, uint16_t v) {
        for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static void append_u32(std::string& s, uint32_t v) {
        for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static void append_u64(std::string& s, uint64_t v) {
        for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static uint16_t read_u16(const std::string& s, size_t pos) {
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        return v;
    }
    static uint32_t read_u32(const std::string& s, size_t pos) {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        return v;
    }
    static uint64_t read_u64(const std::string& s, size_t pos) {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        return v;
    }

    std::map<std::string, Record> records_;
};

// ---- protein embedding file ----
// Binary: magic "SOLDEMB", u32 count, u32 dim, then count*dim little-endian
// f32 values. CSV fallback: one row of dim comma-separated values per line.

inline void write_embeddings(const std::string& path, const nn::Tensor<float>& rows) {
    if (rows.rank() != 2) fail(Errc::ShapeMismatch, "embeddings must be (count, dim)");
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(Errc::IoError, "cannot open for write: " + path);
    f.write("SOLDEMB", 7);
    const uint32_t count = static_cast<uint32_t>(rows.dim(0)), dim = static_cast<uint32_t>(rows.dim(1));
    f.write(reinterpret_cast<const char*>(&count), 4);
    f.write(reinterpret_cast<const char*>(&dim), 4);
    f.write(reinterpret_cast<const char*>(rows.data()), sizeof(float) * static_cast<size_t>(rows.numel()));
    if (!f) fail(Errc::IoError, "short write: " + path);
}

inline nn::Tensor<float> read_embeddings(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::IoError, "cannot open: " + path);
    char magic[7] = {};
    f.read(magic, 7);
    if (f && std::memcmp(magic, "SOLDEMB", 7) == 0) {
        uint32_t count = 0, dim = 0;
        f.read(reinterpret_cast<char*>(&count), 4);
        f.read(reinterpret_cast<char*>(&dim), 4);
        if (!f || count == 0 || dim == 0) fail(Errc::IoError, "malformed embedding header");
        nn::Tensor<float> rows({static_cast<long>(count), static_cast<long>(dim)});
        f.read(reinterpret_cast<char*>(rows.data()), sizeof(float) * static_cast<size_t>(rows.numel()));
        if (!f) fail(Errc::IoError, "truncated embedding payload");
        return rows;
    }
    // CSV fallback
    f.clear();
    f.seekg(0);
    std::vector<std::vector<float>> data;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<float> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stof(cell));
        if (!data.empty() && row.size() != data.front().size())
            fail(Errc::IoError, "ragged embedding CSV");
        data.push_back(std::move(row));
    }
    if (data.empty()) fail(Errc::IoError, "empty embedding file");
    nn::Tensor<float> rows({static_cast<long>(data.size()), static_cast<long>(data.front().size())});
    for (size_t i = 0; i < data.size(); ++i)
        for (size_t j = 0; j < data[i].size(); ++j)
            rows[static_cast<long>(i * data.front().size() + j)] = data[i][j];
    return rows;
}

}  // namespace sold::io
