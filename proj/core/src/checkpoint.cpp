#include "hns/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hns {

namespace {

constexpr char kMagic[4] = {'H', 'N', 'S', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::ostream& out, U value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

class Reader {
public:
    explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    template <typename U>
    U get(const char* what) {
        U value;
        read(&value, sizeof(U), what);
        return value;
    }

    void read(void* dst, std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            std::ostringstream msg;
            msg << "checkpoint truncated reading " << what << " at offset " << pos_ << " (need " << n
                << " bytes, " << bytes_.size() - pos_ << " left)";
            throw CheckpointError(msg.str());
        }
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t offset() const { return pos_; }

private:
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

const Blob* CheckpointFile::find(const std::string& name) const {
    for (const auto& b : blobs) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
        out.write(kMagic, 4);
        put<std::uint64_t>(out, file.digest);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(file.blobs.size()));
        for (const auto& b : file.blobs) {
            if (numel(b.shape) != b.values.size()) {
                throw CheckpointError("blob '" + b.name + "' has " + std::to_string(b.values.size()) +
                                      " values for shape " + to_string(b.shape));
            }
            put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
            out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
            for (auto e : b.shape) put<std::uint64_t>(out, e);
            out.write(reinterpret_cast<const char*>(b.values.data()),
                      static_cast<std::streamsize>(b.values.size() * sizeof(float)));
        }
        if (!out) throw CheckpointError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes));

    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointVersionError("bad checkpoint magic in " + path.string() + " (expected HNS1)");
    }
    CheckpointFile file;
    file.digest = r.get<std::uint64_t>("digest");
    const auto count = r.get<std::uint32_t>("blob count");
    for (std::uint32_t i = 0; i < count; ++i) {
        Blob b;
        const auto name_len = r.get<std::uint32_t>("name length");
        if (name_len > r.remaining()) {
            throw CheckpointError("corrupt name length " + std::to_string(name_len) + " at offset " +
                                  std::to_string(r.offset()));
        }
        b.name.resize(name_len);
        r.read(b.name.data(), name_len, "name");
        const auto rank = r.get<std::uint32_t>("rank");
        if (rank > 8) throw CheckpointError("corrupt rank " + std::to_string(rank) + " for blob " + b.name);
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            b.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("extent")));
            n *= b.shape.back();
        }
        if (n > r.remaining() / sizeof(float)) {
            throw CheckpointError("blob '" + b.name + "' claims " + std::to_string(n) +
                                  " values but the file is too short");
        }
        b.values.resize(n);
        r.read(b.values.data(), n * sizeof(float), "values");
        file.blobs.push_back(std::move(b));
    }
    if (r.remaining() != 0) {
        throw CheckpointError("trailing bytes after last blob at offset " + std::to_string(r.offset()));
    }
    return file;
}

std::vector<Blob> to_blobs(const std::vector<NamedParameter>& params, const std::string& prefix) {
    std::vector<Blob> out;
    for (const auto& p : params) {
        const auto d = p.tensor.data();
        out.push_back({prefix + p.name, p.tensor.shape(), std::vector<float>(d.begin(), d.end())});
    }
    return out;
}

void load_blobs(const CheckpointFile& file, const std::vector<NamedParameter>& params,
                const std::string& prefix) {
    for (const auto& p : params) {
        const Blob* b = file.find(prefix + p.name);
        if (!b) throw CheckpointError("checkpoint has no blob '" + prefix + p.name + "'");
        if (b->shape != p.tensor.shape()) {
            throw CheckpointError("blob '" + b->name + "' has shape " + to_string(b->shape) +
                                  ", parameter expects " + to_string(p.tensor.shape()));
        }
        auto dst = Tensor<Real>(p.tensor).data();
        std::copy(b->values.begin(), b->values.end(), dst.begin());
    }
}

namespace {

void check_digest(const CheckpointFile& file, std::uint64_t expected, const std::filesystem::path& path) {
    if (file.digest != expected) {
        std::ostringstream msg;
        msg << "checkpoint " << path.string() << " was written for a different architecture (digest "
            << std::hex << file.digest << ", expected " << expected << ")";
        throw CheckpointVersionError(msg.str());
    }
}

}  // namespace

void save_model(const std::filesystem::path& path, const HnsModel& model) {
    write_checkpoint(path, {model.digest(), to_blobs(model.parameters())});
}

void load_model(const std::filesystem::path& path, HnsModel& model) {
    const auto file = read_checkpoint(path);
    check_digest(file, model.digest(), path);
    load_blobs(file, model.parameters());
}

void save_hider(const std::filesystem::path& path, const Hider& hider) {
    write_checkpoint(path, {fnv1a64(hider.spec().describe()), to_blobs(hider.parameters())});
}

void load_hider(const std::filesystem::path& path, Hider& hider) {
    const auto file = read_checkpoint(path);
    check_digest(file, fnv1a64(hider.spec().describe()), path);
    load_blobs(file, hider.parameters());
}

void save_seeker(const std::filesystem::path& path, const Seeker& seeker) {
    write_checkpoint(path, {fnv1a64(seeker.spec().describe()), to_blobs(seeker.parameters())});
}

void load_seeker(const std::filesystem::path& path, Seeker& seeker) {
    const auto file = read_checkpoint(path);
    check_digest(file, fnv1a64(seeker.spec().describe()), path);
    load_blobs(file, seeker.parameters());
}

}  // namespace hns
