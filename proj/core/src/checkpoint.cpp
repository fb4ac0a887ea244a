#include "mixstage/checkpoint.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <array>
#include <cstdio>

namespace mixstage {

namespace {

constexpr std::uint32_t kVersion = 1;

std::array<std::pair<const char*, int ArchitectureConfig::*>, 9> arch_fields() {
    return {{{"M", &ArchitectureConfig::M},
             {"N", &ArchitectureConfig::N},
             {"D", &ArchitectureConfig::D},
             {"J", &ArchitectureConfig::J},
             {"F", &ArchitectureConfig::F},
             {"content_dim", &ArchitectureConfig::content_dim},
             {"hidden", &ArchitectureConfig::hidden},
             {"window_T", &ArchitectureConfig::window_T},
             {"unet_depth", &ArchitectureConfig::unet_depth}}};
}

void put_matrix(binio::Writer& w, const Eigen::MatrixXf& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.f32s(m.data(), static_cast<std::size_t>(m.size()));
}

Eigen::MatrixXf get_matrix(binio::Reader& r) {
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * sizeof(float) > r.remaining()) r.fail("tensor larger than the file");
    Eigen::MatrixXf m(rows, cols);
    r.f32s(m.data(), static_cast<std::size_t>(rows) * cols);
    return m;
}

void put_slots(binio::Writer& w, const std::vector<AdamSlotRecord>& slots) {
    w.u32(static_cast<std::uint32_t>(slots.size()));
    for (const auto& s : slots) {
        w.str(s.name);
        w.i64(s.steps);
        put_matrix(w, s.m);
        put_matrix(w, s.v);
    }
}

std::vector<AdamSlotRecord> get_slots(binio::Reader& r) {
    std::vector<AdamSlotRecord> slots(r.u32());
    for (auto& s : slots) {
        s.name = r.str();
        s.steps = r.i64();
        s.m = get_matrix(r);
        s.v = get_matrix(r);
    }
    return slots;
}

std::string encode_payload(const Checkpoint& c) {
    binio::Writer w;
    w.magic("MXK1");
    w.u32(kVersion);
    for (const auto& [name, field] : arch_fields()) w.u32(static_cast<std::uint32_t>(c.arch.*field));
    w.i64(c.iteration);
    w.f64(c.dev_loss);
    w.f64(c.best_dev_loss);
    w.u32(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        w.str(t.name);
        put_matrix(w, t.value);
    }
    put_slots(w, c.gen_optimizer);
    put_slots(w, c.disc_optimizer);
    w.str(c.rng_state);
    w.str(c.modes ? encode_mode_model(*c.modes) : std::string());
    return w.take();
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    std::string bytes = encode_payload(c);
    const auto digest = binio::sha256(bytes);
    bytes.append(reinterpret_cast<const char*>(digest.data()), digest.size());
    return bytes;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < 4 + 32) throw FormatError(origin, 0, "file too short for a checkpoint");
    const std::string_view payload(bytes.data(), bytes.size() - 32);
    binio::Reader r(payload, origin);
    r.expect_magic("MXK1");
    if (const auto v = r.u32(); v != kVersion) r.fail("unsupported checkpoint version " + std::to_string(v));
    const auto digest = binio::sha256(payload);
    if (std::string_view(reinterpret_cast<const char*>(digest.data()), 32) != std::string_view(bytes).substr(payload.size()))
        throw FormatError(origin, payload.size(), "content hash mismatch");

    Checkpoint c;
    for (const auto& [name, field] : arch_fields()) c.arch.*field = static_cast<int>(r.u32());
    c.iteration = r.i64();
    c.dev_loss = r.f64();
    c.best_dev_loss = r.f64();
    c.tensors.resize(r.u32());
    for (auto& t : c.tensors) {
        t.name = r.str();
        t.value = get_matrix(r);
    }
    c.gen_optimizer = get_slots(r);
    c.disc_optimizer = get_slots(r);
    c.rng_state = r.str();
    const std::string modes = r.str();
    if (!modes.empty()) c.modes = decode_mode_model(modes, origin + " (embedded mode model)");
    if (r.remaining() != 0) r.fail("trailing bytes before the content hash");
    try {
        validate(c.arch);
    } catch (const InvalidArgument& e) {
        throw FormatError(origin, 8, std::string("invalid architecture: ") + e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) { binio::write_file_atomic(path, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path), path); }

std::string content_hash(const Checkpoint& c) { return binio::hex(binio::sha256(encode_payload(c))); }

bool operator==(const Checkpoint& a, const Checkpoint& b) { return encode_payload(a) == encode_payload(b); }

std::vector<NamedTensor> capture_tensors(MixStageModel& model) {
    const nn::ParamList all = model.all_params();
    std::vector<NamedTensor> out;
    for (const auto& [name, p] : all.params) out.push_back({name, p->value});
    for (const auto& [name, m] : all.buffers) out.push_back({name, *m});
    return out;
}

void restore_tensors(const std::vector<NamedTensor>& tensors, MixStageModel& model) {
    const nn::ParamList all = model.all_params();
    std::vector<std::pair<std::string, Eigen::MatrixXf*>> slots;
    for (const auto& [name, p] : all.params) slots.emplace_back(name, &p->value);
    for (const auto& [name, m] : all.buffers) slots.emplace_back(name, m);
    if (slots.size() != tensors.size())
        throw ArchMismatchError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                                std::to_string(slots.size()));
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& t = tensors[i];
        if (t.name != slots[i].first) throw ArchMismatchError("expected tensor '" + slots[i].first + "', found '" + t.name + "'");
        if (t.value.rows() != slots[i].second->rows() || t.value.cols() != slots[i].second->cols())
            throw ArchMismatchError("tensor '" + t.name + "' has the wrong shape");
        *slots[i].second = t.value;
    }
}

std::vector<AdamSlotRecord> capture_optimizer(const nn::Adam& opt) {
    std::vector<AdamSlotRecord> out;
    const auto& params = opt.params().params;
    for (std::size_t i = 0; i < params.size(); ++i)
        out.push_back({params[i].first, opt.slots()[i].m, opt.slots()[i].v, opt.slots()[i].steps});
    return out;
}

void restore_optimizer(const std::vector<AdamSlotRecord>& slots, nn::Adam& opt) {
    const auto& params = opt.params().params;
    if (slots.size() != params.size()) throw ArchMismatchError("optimizer state has the wrong number of slots");
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].name != params[i].first) throw ArchMismatchError("optimizer slot '" + slots[i].name + "' out of order");
        auto& dst = opt.slots()[i];
        if (slots[i].m.rows() != dst.m.rows() || slots[i].m.cols() != dst.m.cols() || slots[i].v.rows() != dst.v.rows() ||
            slots[i].v.cols() != dst.v.cols())
            throw ArchMismatchError("optimizer slot '" + slots[i].name + "' has the wrong shape");
        dst.m = slots[i].m;
        dst.v = slots[i].v;
        dst.steps = slots[i].steps;
    }
}

std::unique_ptr<MixStageModel> model_from_checkpoint(const Checkpoint& c) {
    auto model = std::make_unique<MixStageModel>(c.arch, 0);
    restore_tensors(c.tensors, *model);
    return model;
}

void require_same_arch(const ArchitectureConfig& expected, const ArchitectureConfig& got) {
    for (const auto& [name, field] : arch_fields()) {
        if (expected.*field != got.*field)
            throw ArchMismatchError(std::string("architecture mismatch on ") + name + ": expected " +
                                    std::to_string(expected.*field) + ", checkpoint has " + std::to_string(got.*field));
    }
}

}  // namespace mixstage
