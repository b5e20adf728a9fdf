#include "diffbp/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "diffbp/container.hpp"
#include "diffbp/train.hpp"

namespace diffbp {

namespace fs = std::filesystem;

double synthetic_score(const SyntheticFaceParams& p) {
    const double a = p.asymmetry / SyntheticFaceParams::kAsymmetryMax;
    const double tex = p.texture_noise / SyntheticFaceParams::kTextureMax;
    const double smile = (p.mouth_curvature + 1.0) / 2.0;
    return 1.0 + 4.0 * (0.5 * (1.0 - a) + 0.3 * (1.0 - tex) + 0.2 * smile);
}

SyntheticFaceParams sample_face_params(DiffusionRng& rng) {
    auto span = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    SyntheticFaceParams p;
    p.eye_spacing = span(SyntheticFaceParams::kEyeSpacingMin, SyntheticFaceParams::kEyeSpacingMax);
    p.face_aspect = span(SyntheticFaceParams::kFaceAspectMin, SyntheticFaceParams::kFaceAspectMax);
    p.mouth_curvature = span(SyntheticFaceParams::kMouthCurvMin, SyntheticFaceParams::kMouthCurvMax);
    p.asymmetry = span(0.0, SyntheticFaceParams::kAsymmetryMax);
    p.texture_noise = span(0.0, SyntheticFaceParams::kTextureMax);
    return p;
}

Tensor render_face(const SyntheticFaceParams& p, std::size_t size, DiffusionRng& texture_rng) {
    if (size < 8) throw ValidationError("face images need size >= 8, got " + std::to_string(size));
    Tensor img({size, size, 1});
    const double ry = 0.42;
    // Asymmetry skews the two half-widths of the face outline.
    const double rx_left = 0.36 * p.face_aspect * (1.0 + 0.5 * p.asymmetry);
    const double rx_right = 0.36 * p.face_aspect * (1.0 - 0.5 * p.asymmetry);
    const double eye_y = -0.12;
    const double eye_r2 = 0.055 * 0.055;

    // Texture is a low-frequency random field; a per-pixel speckle alone
    // would vanish under token pooling.
    double fa[3], fb[3], ph[3];
    for (int k = 0; k < 3; ++k) {
        fa[k] = 4.0 + 8.0 * texture_rng.uniform();
        fb[k] = 4.0 + 8.0 * texture_rng.uniform();
        ph[k] = 2.0 * M_PI * texture_rng.uniform();
    }

    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(size) - 0.5;
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(size) - 0.5;
            double val = -0.8;
            const double rx = u < 0.0 ? rx_left : rx_right;
            const double e = (u / rx) * (u / rx) + (v / ry) * (v / ry);
            if (e <= 1.0) {
                val = 0.35 - 0.3 * e;  // shaded face interior

                // Eyes; the right one drifts with asymmetry.
                const double lx = -p.eye_spacing / 2.0, ly = eye_y;
                const double rxc = p.eye_spacing / 2.0 + 0.3 * p.asymmetry;
                const double ryc = eye_y + 0.5 * p.asymmetry;
                const double dl = (u - lx) * (u - lx) + (v - ly) * (v - ly);
                const double dr = (u - rxc) * (u - rxc) + (v - ryc) * (v - ryc);
                if (dl <= eye_r2 || dr <= eye_r2) val = -0.7;

                // Mouth arc with a curvature bow and an asymmetric tilt.
                const double mu = u / 0.17;
                if (mu >= -1.0 && mu <= 1.0) {
                    const double arc = 0.18 - 0.1 * p.mouth_curvature * (1.0 - mu * mu) + 0.4 * p.asymmetry * mu;
                    if (std::abs(v - arc) < 0.035) val = -0.55;
                }

                double field = 0.0;
                for (int k = 0; k < 3; ++k) field += std::sin(fa[k] * u + fb[k] * v + ph[k]);
                val += p.texture_noise * (0.5 * field / 3.0 + 0.15 * texture_rng.gaussian());
            }
            img.data()[y * size + x] = static_cast<float>(std::clamp(val, -1.0, 1.0));
        }
    }
    return img;
}

std::vector<SyntheticFaceParams> corpus_params(std::size_t n, std::uint64_t seed) {
    std::vector<SyntheticFaceParams> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        DiffusionRng rng = derive_rng(seed, RngDomain::corpus_params, i);
        out.push_back(sample_face_params(rng));
    }
    return out;
}

std::vector<LabeledSample> generate_synthetic_corpus(std::size_t n, std::size_t size, std::uint64_t seed,
                                                     bool labeled, double label_noise) {
    if (n < 1) throw ValidationError("corpus size must be >= 1");
    std::vector<LabeledSample> out;
    out.reserve(n);
    const std::vector<SyntheticFaceParams> params = corpus_params(n, seed);
    for (std::size_t i = 0; i < n; ++i) {
        DiffusionRng tex_rng = derive_rng(seed, RngDomain::corpus_texture, i);
        LabeledSample s;
        char name[32];
        std::snprintf(name, sizeof(name), "face_%05zu.pgm", i);
        s.id = name;
        s.image = render_face(params[i], size, tex_rng);
        if (labeled) {
            double score = synthetic_score(params[i]);
            if (label_noise > 0.0) {
                DiffusionRng noise_rng = derive_rng(seed, RngDomain::noise, i);
                score = std::clamp(score + label_noise * noise_rng.gaussian(), 1.0, 5.0);
            }
            s.score = score;
        }
        out.push_back(std::move(s));
    }
    return out;
}

// --- PGM ------------------------------------------------------------------

void write_pgm(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.dim(2) != 1)
        throw ValidationError("PGM output needs an HxWx1 image, got " + shape_to_string(image.shape()));
    const std::size_t h = image.dim(0), w = image.dim(1);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double v = std::clamp(static_cast<double>(image.data()[y * w + x]), -1.0, 1.0);
            row[x] = static_cast<unsigned char>(std::lround((v + 1.0) / 2.0 * 255.0));
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
    }
    if (!f) throw IoError("short write to '" + path + "'");
}

namespace {

// Reads one whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(in.get()));
            return tok;
        }
    }
    throw ParseError("unexpected end of PGM header");
}

}  // namespace

Tensor read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    if (pgm_token(f) != "P5") throw ParseError("'" + path + "' is not a binary (P5) PGM");
    std::size_t w, h, maxval;
    try {
        w = std::stoul(pgm_token(f));
        h = std::stoul(pgm_token(f));
        maxval = std::stoul(pgm_token(f));
    } catch (const std::exception&) {
        throw ParseError("bad PGM header in '" + path + "'");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
        throw ParseError("unsupported PGM geometry in '" + path + "' (8-bit only)");
    f.get();  // single whitespace byte after maxval
    std::vector<unsigned char> raw(w * h);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(f.gcount()) != raw.size())
        throw ParseError("PGM pixel data truncated in '" + path + "'");
    Tensor img({h, w, 1});
    for (std::size_t i = 0; i < raw.size(); ++i)
        img.data()[i] = static_cast<float>(static_cast<double>(raw[i]) / static_cast<double>(maxval) * 2.0 - 1.0);
    return img;
}

Tensor read_image(const std::string& path) {
    const fs::path p(path);
    if (p.extension() == ".pgm") return read_pgm(path);
    if (p.extension() == ".dfbp") return read_tensor(path);
    throw ValidationError("unsupported image extension '" + p.extension().string() + "' (want .pgm or .dfbp)");
}

// --- CSV ------------------------------------------------------------------

std::vector<std::pair<std::string, double>> read_labels_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open labels file '" + path + "'");
    std::vector<std::pair<std::string, double>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            if (line != "path,score") throw ParseError("labels CSV must start with header 'path,score'", lineno);
            continue;
        }
        if (line.empty()) continue;
        const std::size_t comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0) throw ParseError("malformed labels row '" + line + "'", lineno);
        const std::string id = line.substr(0, comma);
        double score;
        try {
            std::size_t used = 0;
            score = std::stod(line.substr(comma + 1), &used);
            if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError("malformed score in labels row '" + line + "'", lineno);
        }
        if (score < 1.0 || score > 5.0)
            throw ValidationError("score " + std::to_string(score) + " outside [1, 5] at line " +
                                  std::to_string(lineno));
        out.emplace_back(id, score);
    }
    return out;
}

std::vector<LabeledSample> load_labeled_dataset(const std::string& labels_csv) {
    const fs::path base = fs::path(labels_csv).parent_path();
    std::vector<LabeledSample> out;
    for (const auto& [id, score] : read_labels_csv(labels_csv)) {
        LabeledSample s;
        s.id = id;
        const fs::path img_path = fs::path(id).is_absolute() ? fs::path(id) : base / id;
        if (!fs::exists(img_path)) throw IoError("missing image file '" + img_path.string() + "'");
        s.image = read_image(img_path.string());
        s.score = score;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<UnlabeledSample> read_image_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".dfbp") names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) throw IoError("no .pgm or .dfbp images in '" + dir + "'");
    std::vector<UnlabeledSample> out;
    out.reserve(names.size());
    for (const std::string& name : names) {
        UnlabeledSample s;
        s.id = name;
        s.image = read_image((fs::path(dir) / name).string());
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::pair<std::string, std::size_t>> read_folds_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open folds file '" + path + "'");
    std::vector<std::pair<std::string, std::size_t>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            if (line != "sample_id,fold") throw ParseError("folds CSV must start with header 'sample_id,fold'", lineno);
            continue;
        }
        if (line.empty()) continue;
        const std::size_t comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0) throw ParseError("malformed folds row '" + line + "'", lineno);
        try {
            out.emplace_back(line.substr(0, comma), std::stoul(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw ParseError("malformed fold index in row '" + line + "'", lineno);
        }
    }
    return out;
}

}  // namespace diffbp
