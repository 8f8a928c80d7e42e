#include "hydra/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hydra {

std::vector<FoldSpec> kfold_split(const std::vector<int>& labels, const std::vector<int>& reps, int folds) {
    if (labels.size() != reps.size()) throw std::invalid_argument("kfold_split: labels and repetitions differ in length");
    if (labels.empty()) throw std::invalid_argument("kfold_split: empty dataset");
    if (folds < 2) throw std::invalid_argument("kfold_split: need at least 2 folds");
    std::map<int, std::set<int>> have;
    for (size_t i = 0; i < labels.size(); ++i) have[labels[i]].insert(reps[i]);
    for (auto& [c, rs] : have)
        for (int r = 0; r < folds; ++r)
            if (!rs.count(r))
                throw std::invalid_argument("kfold_split: class " + std::to_string(c) + " is missing repetition " + std::to_string(r));
    std::vector<FoldSpec> out;
    for (int k = 0; k < folds; ++k) {
        FoldSpec f{k, k, {}};
        for (int r = 0; r < folds; ++r)
            if (r != k) f.train_repetitions.push_back(r);
        out.push_back(f);
    }
    return out;
}

FoldIndices fold_indices(const std::vector<int>& reps, const FoldSpec& f) {
    FoldIndices ix;
    for (size_t i = 0; i < reps.size(); ++i) {
        if (reps[i] == f.test_repetition) ix.test.push_back(i);
        else if (std::find(f.train_repetitions.begin(), f.train_repetitions.end(), reps[i]) != f.train_repetitions.end())
            ix.train.push_back(i);
    }
    if (ix.test.empty()) throw std::invalid_argument("fold " + std::to_string(f.fold_idx) + ": empty test set");
    if (ix.train.empty()) throw std::invalid_argument("fold " + std::to_string(f.fold_idx) + ": empty training set");
    return ix;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (pred.empty()) throw std::invalid_argument("accuracy: empty test set");
    size_t ok = 0;
    for (size_t i = 0; i < pred.size(); ++i) ok += pred[i] == truth[i];
    return double(ok) / double(pred.size());
}

MeanStd mean_std(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean_std: no values");
    MeanStd r;
    for (double x : v) r.mean += x;
    r.mean /= double(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / double(v.size() - 1));
    }
    return r;
}

ResultTable::ResultTable(std::vector<std::string> models, int folds) : models_(std::move(models)), folds_(folds) {
    if (models_.empty()) throw std::invalid_argument("ResultTable: no models");
    for (auto& m : models_) acc_[m].resize(size_t(folds_));
}

void ResultTable::set(const std::string& model, int fold, int subject, double acc) {
    auto it = acc_.find(model);
    if (it == acc_.end()) throw std::invalid_argument("ResultTable: unknown model " + model);
    if (fold < 0 || fold >= folds_) throw std::out_of_range("ResultTable: fold out of range");
    it->second[size_t(fold)][subject] = acc;
}

int ResultTable::subjects() const {
    std::set<int> s;
    for (auto& [m, folds] : acc_)
        for (auto& f : folds)
            for (auto& [subj, a] : f) s.insert(subj);
    return int(s.size());
}

MeanStd ResultTable::fold_stats(const std::string& model, int fold) const {
    std::vector<double> v;
    for (auto& [s, a] : acc_.at(model).at(size_t(fold))) v.push_back(a);
    if (v.empty()) throw std::runtime_error("ResultTable: no results for " + model + " fold " + std::to_string(fold));
    return mean_std(v);
}

MeanStd ResultTable::average(const std::string& model) const {
    MeanStd r;
    for (int k = 0; k < folds_; ++k) {
        auto s = fold_stats(model, k);
        r.mean += s.mean;
        r.std += s.std;
    }
    r.mean /= folds_;
    r.std /= folds_;
    return r;
}

double ResultTable::subject_accuracy(const std::string& model, int subject) const {
    double sum = 0;
    for (int k = 0; k < folds_; ++k) sum += acc_.at(model).at(size_t(k)).at(subject);
    return sum / folds_;
}

namespace {
std::string fmt(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}
}  // namespace

std::string ResultTable::csv() const {
    std::ostringstream o;
    o << "model,fold,mean,std\n";
    for (auto& m : models_) {
        for (int k = 0; k < folds_; ++k) {
            auto s = fold_stats(m, k);
            o << m << ',' << k + 1 << ',' << fmt(s.mean) << ',' << fmt(s.std) << '\n';
        }
        auto a = average(m);
        o << m << ",average," << fmt(a.mean) << ',' << fmt(a.std) << '\n';
    }
    return o.str();
}

std::string ResultTable::text_table() const {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"Model"};
    for (int k = 0; k < folds_; ++k) head.push_back("Fold " + std::to_string(k + 1));
    head.push_back("Average");
    rows.push_back(head);
    for (auto& m : models_) {
        std::vector<std::string> r{m};
        for (int k = 0; k < folds_; ++k) {
            auto s = fold_stats(m, k);
            r.push_back(fmt(100 * s.mean, 2) + " ± " + fmt(100 * s.std, 2));
        }
        auto a = average(m);
        r.push_back(fmt(100 * a.mean, 2) + " ± " + fmt(100 * a.std, 2));
        rows.push_back(r);
    }
    // "±" is two bytes but one column wide
    auto width = [](const std::string& s) {
        size_t w = 0;
        for (unsigned char c : s) w += (c & 0xC0) != 0x80;
        return w;
    };
    std::vector<size_t> col(head.size(), 0);
    for (auto& r : rows)
        for (size_t j = 0; j < r.size(); ++j) col[j] = std::max(col[j], width(r[j]));
    std::ostringstream o;
    o << "Accuracy (%) and STD across " << subjects() << " synthetic subjects (synthetic data)\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < rows[i].size(); ++j) {
            if (j) o << " | ";
            o << rows[i][j] << std::string(col[j] - width(rows[i][j]), ' ');
        }
        o << '\n';
        if (i == 0) {
            for (size_t j = 0; j < col.size(); ++j) o << (j ? "-+-" : "") << std::string(col[j], '-');
            o << '\n';
        }
    }
    return o.str();
}

std::string ResultTable::boxplot_csv() const {
    std::set<int> subj;
    for (auto& [m, folds] : acc_)
        for (auto& f : folds)
            for (auto& [s, a] : f) subj.insert(s);
    std::ostringstream o;
    o << "model,subject,accuracy\n";
    for (auto& m : models_)
        for (int s : subj) o << m << ',' << s << ',' << fmt(subject_accuracy(m, s)) << '\n';
    return o.str();
}

}  // namespace hydra
