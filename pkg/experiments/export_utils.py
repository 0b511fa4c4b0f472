"""
Экспорт результатов экспериментов: таблицы CSV (pandas) и SVG-графики (matplotlib)
"""

import logging
import os
from typing import Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# Попытка импорта matplotlib: без него эксперименты пишут только таблицы
try:
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
    HAS_PLOT_SUPPORT = True
except ImportError as e:
    HAS_PLOT_SUPPORT = False
    logger.warning(f"matplotlib не установлен: {e}, SVG-графики не создаются")

# фиксированные метаданные SVG, чтобы повторный прогон давал тот же файл
SVG_METADATA = {'Date': None, 'Creator': 'flock_lab'}


class ResultExportService:
    """
    Запись артефактов эксперимента в каталог результатов
    """

    def __init__(self, output_dir):
        self.output_dir = str(output_dir)
        self.files = []
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def export_table(self, frame: pd.DataFrame, filename: str) -> str:
        """Таблица CSV с полной точностью чисел"""
        target = self.path(filename)
        frame.to_csv(target, index=False, float_format='%.17g')
        self.files.append(filename)
        logger.debug(f"Таблица {filename}: {len(frame)} строк")
        return target

    def export_npz(self, filename: str, **arrays) -> str:
        target = self.path(filename)
        np.savez_compressed(target, **arrays)
        self.files.append(filename)
        return target

    def export_text(self, filename: str, text: str) -> str:
        target = self.path(filename)
        with open(target, 'w', encoding='utf-8') as fh:
            fh.write(text)
        self.files.append(filename)
        return target

    def plot_lines(self, filename: str, x, lines: Sequence[dict], xlabel: str, ylabel: str,
                   title: str = '', logy: bool = False, band: Optional[dict] = None) -> Optional[str]:
        """
        Линейный график: lines: список {'y': ..., 'label': ...};
        band: {'lower': ..., 'upper': ..., 'label': ...} для теоретической полосы.
        """
        if not HAS_PLOT_SUPPORT:
            return None
        plt.rcParams['svg.hashsalt'] = 'flock_lab'
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        try:
            if band is not None:
                ax.fill_between(x, band['lower'], band['upper'], color='0.85', label=band.get('label'))
            for line in lines:
                ax.plot(x, line['y'], label=line.get('label'), linestyle=line.get('style', '-'))
            if logy:
                ax.set_yscale('log')
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.grid(True, alpha=0.3)
            ax.legend(loc='best', fontsize='small')
            target = self.path(filename)
            fig.savefig(target, format='svg', metadata=SVG_METADATA)
        finally:
            plt.close(fig)
        self.files.append(filename)
        return target
