from ciprecoding.model import QPSK, Scenario, gen_channels, gen_symbols, rotate_channels


def make_instance(n_tx, n_users, gamma_db=10.0, trial=0, seed=0, mod=QPSK, n0=1.0):
    """Scenario, channels, symbols and rotated channels of one trial."""
    sc = Scenario.uniform(n_tx, n_users, gamma_db, n0, mod, seed)
    ch, sy = gen_channels(sc, trial), gen_symbols(sc, trial)
    return sc, ch, sy, rotate_channels(ch, sy)
