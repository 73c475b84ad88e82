"""TF-IDF features + multinomial logistic regression, the comparison floor."""

import numpy as np

from .errors import EmptyMask
from .graph import tfidf
from .model import softmax


def tfidf_features(corpus, variant="raw"):
    """K x U dense document vectors, rows scaled to unit L2 norm."""
    X = tfidf(corpus, variant).to_scipy().T.toarray()
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(norms > 0, norms, 1.0)


def fit_logreg(X, y, n_classes, l2=1e-4, epochs=500, lr=0.1):
    """Full-batch gradient descent on mean cross-entropy + l2/2 * ||W||^2
    (bias unpenalised). Returns ``(W, b)``."""
    if len(y) == 0:
        raise EmptyMask("no training documents for the baseline")
    n, d = X.shape
    W = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    Y = np.eye(n_classes)[y]
    for _ in range(epochs):
        P = softmax(X @ W + b)
        G = (P - Y) / n
        W -= lr * (X.T @ G + l2 * W)
        b -= lr * G.sum(axis=0)
    return W, b


def baseline_predictions(corpus, splits, l2=1e-4, epochs=500, lr=0.1, variant="raw"):
    """Predicted class for every document, trained on ``splits.train_ids``."""
    X = tfidf_features(corpus, variant)
    labels = corpus.labels
    W, b = fit_logreg(X[splits.train_ids], labels[splits.train_ids], corpus.n_classes, l2, epochs, lr)
    return np.argmax(X @ W + b, axis=1)
