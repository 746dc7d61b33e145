"""Learning-rate multipliers, applied on top of each parameter group's base rate"""

import math

from ..errors import ConfigError

# License: BSD 3 clause

SCHEDULES = ('inv_sqrt', 'cosine')


def check_schedule(total_steps, warmup_steps=0, cooldown_steps=0, kind='inv_sqrt'):
    if kind not in SCHEDULES:
        raise ConfigError(f'Got schedule={kind} but expected one of {SCHEDULES}.')
    if total_steps < 1:
        raise ConfigError(f'Got total_steps={total_steps}, the schedule needs at least one step.')
    if warmup_steps < 0 or cooldown_steps < 0:
        raise ConfigError(f'Got warmup_steps={warmup_steps} and cooldown_steps={cooldown_steps}, both must be >= 0.')
    if warmup_steps + cooldown_steps > total_steps:
        raise ConfigError(f'Warmup ({warmup_steps}) and cooldown ({cooldown_steps}) steps exceed '
                          f'the {total_steps} training steps.')


def _inv_sqrt(step, warmup_steps):
    if step < warmup_steps:
        return step/warmup_steps
    return math.sqrt(max(warmup_steps, 1)/max(step, 1))


def lr_schedule(step, total_steps, warmup_steps=0, cooldown_steps=0, kind='inv_sqrt'):
    """Learning-rate multiplier at optimizer step `step`

    * ``inv_sqrt``: linear warmup from 0 to 1 over `warmup_steps`, then
      ``sqrt(warmup_steps/step)``, then a linear cooldown to 0 over the last
      `cooldown_steps`
    * ``cosine``: linear warmup, then a half cosine from 1 down to 0 at `total_steps`;
      the cosine already ends at 0 so `cooldown_steps` only counts against the budget

    Parameters
    ----------
    step : int
        number of optimizer steps already taken, in ``[0, total_steps]``
    total_steps : int
    warmup_steps : int, default is 0
    cooldown_steps : int, default is 0
    kind : {'inv_sqrt', 'cosine'}

    Returns
    -------
    float
    """
    check_schedule(total_steps, warmup_steps, cooldown_steps, kind)
    if step < 0:
        raise ValueError(f'Got step={step}, expected a non-negative step.')
    step = min(step, total_steps)

    if kind == 'cosine':
        if step < warmup_steps:
            return step/warmup_steps
        progress = (step - warmup_steps)/max(total_steps - warmup_steps, 1)
        return 0.5*(1 + math.cos(math.pi*progress))

    cooldown_start = total_steps - cooldown_steps
    if cooldown_steps and step >= cooldown_start:
        return _inv_sqrt(cooldown_start, warmup_steps)*(total_steps - step)/cooldown_steps
    return _inv_sqrt(step, warmup_steps)
