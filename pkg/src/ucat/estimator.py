"""scikit-learn compatible wrappers."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .attack import AttackConfig
from .dirichlet import entropy, uncertainty
from .evidence import EvidenceProfile, Stabilization, concentrations, probabilities
from .losses import LossConfig, Variant
from .model import ToyContrastiveModel
from .train import TrainConfig, finetune

__all__ = ["ContrastiveClassifier", "DirichletUncertainty"]


class ContrastiveClassifier(ClassifierMixin, BaseEstimator):
    """Cosine-prototype classifier with optional adversarial fine-tuning.

    With ``epsilon=0`` this is plain cross-entropy training.  Passing a
    fitted classifier (or a :class:`~ucat.model.ToyContrastiveModel`) as
    ``init`` warm-starts from its weights and prototypes.

    Parameters
    ----------
    embed_dim : int
        Embedding dimension ``d``.
    tau, tau_prime : float
        Logit temperature and evidence calibration coefficient.
    variant : {"ce", "prob-kl", "ucat"}
        Training objective.
    lam : float or None
        Regulariser weight; ``None`` uses ``lambda_beta / beta``.
    lambda_beta : float
        Weight before normalisation, used when ``lam`` is None.
    beta_convention : {"literal", "evidence-bound"}
    epsilon, attack_steps, step_size
        Training-time PGD; ``step_size=None`` means ``2.5 * epsilon / steps``.
    epochs, batch_size, learning_rate, momentum
        SGD settings (cosine learning-rate decay).
    random_state : int
        Seeds weight/prototype initialisation and batch order.
    attack_seed : int
    init : ContrastiveClassifier, ToyContrastiveModel or None
    """

    def __init__(self, embed_dim=8, tau=0.07, tau_prime=0.07, variant="ce", lam=None,
                 lambda_beta=1e5, beta_convention="literal", epsilon=0.0, attack_steps=10,
                 step_size=None, epochs=30, batch_size=64, learning_rate=0.05, momentum=0.9,
                 random_state=0, attack_seed=0, init=None):
        self.embed_dim = embed_dim
        self.tau = tau
        self.tau_prime = tau_prime
        self.variant = variant
        self.lam = lam
        self.lambda_beta = lambda_beta
        self.beta_convention = beta_convention
        self.epsilon = epsilon
        self.attack_steps = attack_steps
        self.step_size = step_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.random_state = random_state
        self.attack_seed = attack_seed
        self.init = init

    def _initial_model(self, n_features, n_classes):
        init = self.init
        if isinstance(init, ContrastiveClassifier):
            check_is_fitted(init)
            init = init.model_
        if init is None:
            return ToyContrastiveModel.initialize(n_features, self.embed_dim, n_classes,
                                                  tau=self.tau, seed=self.random_state)
        if init.n_classes != n_classes or init.input_dim != n_features:
            raise ValueError("init model does not match the data's shape")
        return init

    def loss_config(self):
        return LossConfig(Variant(self.variant), lam=self.lam,
                          evidence=EvidenceProfile(self.tau, self.tau_prime),
                          lambda_beta=self.lambda_beta, beta_convention=self.beta_convention)

    def train_config(self):
        attack = None
        if self.epsilon > 0:
            step = self.step_size
            if step is None:
                step = 2.5 * self.epsilon / max(self.attack_steps, 1)
            attack = AttackConfig(self.epsilon, self.attack_steps, step, seed=self.attack_seed)
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, momentum=self.momentum,
                           attack=attack, seed=self.random_state)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y)
        if np.any(X < 0) or np.any(X > 1):
            raise ValueError("inputs must lie in [0, 1]")
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        model = self._initial_model(X.shape[1], len(self.classes_))
        if X_val is not None:
            X_val = check_array(X_val)
            y_val = np.searchsorted(self.classes_, y_val)
        self.model_, self.train_log_ = finetune(model, X, yi, self.train_config(),
                                                self.loss_config(), X_val, y_val)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Cosine logits, one column per class."""
        check_is_fitted(self)
        return self.model_.logits(check_array(X))

    def predict_proba(self, X):
        return probabilities(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def predict_uncertainty(self, X):
        """Columns AU, EU, PU (nats for AU and PU)."""
        logits = self.decision_function(X)
        return DirichletUncertainty(tau=self.tau, tau_prime=self.tau_prime).transform(logits)


class DirichletUncertainty(TransformerMixin, BaseEstimator):
    """Turn logits into ``[AU, EU, PU]`` columns, or into concentrations.

    Stateless: ``fit`` only checks the input.
    """

    def __init__(self, tau=0.07, tau_prime=0.07, stabilization="linear", raw_softplus=False,
                 output="uncertainty"):
        self.tau = tau
        self.tau_prime = tau_prime
        self.stabilization = stabilization
        self.raw_softplus = raw_softplus
        self.output = output

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def _profile(self):
        return EvidenceProfile(self.tau, self.tau_prime, Stabilization(self.stabilization),
                               self.raw_softplus)

    def transform(self, X):
        X = check_array(X)
        alpha = concentrations(X, self._profile())
        if self.output == "alpha":
            return alpha
        if self.output != "uncertainty":
            raise ValueError(f"unknown output {self.output!r}")
        t = uncertainty(alpha)
        pu = entropy(probabilities(X))
        return np.column_stack([t.au, t.eu, pu])
