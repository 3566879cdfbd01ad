"""Exception hierarchy shared by all modules."""


class NetGamesError(Exception):
    """Base class for all library errors."""


# --- topology ---------------------------------------------------------------

class SelfLoop(NetGamesError):
    def __init__(self, player):
        self.player = player
        super().__init__(f"self-loop on player {player}")


class Disconnected(NetGamesError):
    def __init__(self, components):
        self.components = components
        super().__init__(f"communication graph is disconnected: {components}")


class BadDimension(NetGamesError):
    def __init__(self, player, dim):
        self.player = player
        self.dim = dim
        super().__init__(f"invalid decision dimension {dim} for player {player}")


# --- games ------------------------------------------------------------------

class DimensionMismatch(NetGamesError):
    pass


class NotInvertibleHere(NetGamesError):
    """Payoff cannot be inverted at this play; the observation is skipped."""


class NotStronglyMonotone(NetGamesError):
    def __init__(self, eta):
        self.eta = eta
        super().__init__(f"pseudogradient not strongly monotone (eta={eta:.6g})")


class RejectedInstance(NetGamesError):
    pass


# --- step sizes / operators -------------------------------------------------

class PhiNotPD(NetGamesError):
    def __init__(self, sigma_min):
        self.sigma_min = sigma_min
        super().__init__(f"design operator not positive definite (min eig {sigma_min:.6g})")


class GammaOutOfRange(NetGamesError):
    pass


class InnerSolveFailed(NetGamesError):
    pass


# --- estimator --------------------------------------------------------------

class PivotInfeasible(NetGamesError):
    pass


class InsufficientHistory(NetGamesError):
    pass


# --- inexact ----------------------------------------------------------------

class BadRule(NetGamesError):
    pass


# --- oracle -----------------------------------------------------------------

class Stalled(NetGamesError):
    pass


class NoFixedPointFound(NetGamesError):
    pass


# --- harness ----------------------------------------------------------------

class SchemaError(NetGamesError):
    def __init__(self, path, field, message=""):
        self.path = path
        self.field = field
        super().__init__(f"config error in {path} at '{field}': {message}")


class IoError(NetGamesError):
    pass
