from django.db import models


class ExperimentRun(models.Model):
    """Запуск именованного эксперимента: конфигурация, сиды и итог проверок"""
    STATUS_CHOICES = [
        ('running', 'Выполняется'),
        ('passed', 'Проверки пройдены'),
        ('failed', 'Есть непройденные проверки'),
        ('error', 'Ошибка'),
    ]

    name = models.CharField('Эксперимент', max_length=50)
    output_dir = models.CharField('Каталог результатов', max_length=500)
    config_hash = models.CharField('Хеш конфигурации', max_length=16)
    master_seed = models.BigIntegerField('Мастер-сид')
    replicas = models.PositiveIntegerField('Реплик', default=1)
    status = models.CharField('Статус', max_length=10, choices=STATUS_CHOICES, default='running')
    wall_time = models.FloatField('Время выполнения (с)', null=True, blank=True)
    manifest = models.TextField('Манифест', blank=True)
    created_at = models.DateTimeField('Дата запуска', auto_now_add=True)

    class Meta:
        verbose_name = 'Запуск эксперимента'
        verbose_name_plural = 'Запуски экспериментов'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.name} [{self.get_status_display()}] {self.config_hash}"


class CheckResult(models.Model):
    """Результат одной встроенной проверки запуска"""
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='checks', verbose_name='Запуск')
    tag = models.CharField('Проверка', max_length=60)
    passed = models.BooleanField('Пройдена')
    measured = models.JSONField('Измеренные значения', default=dict, blank=True)

    class Meta:
        verbose_name = 'Результат проверки'
        verbose_name_plural = 'Результаты проверок'
        ordering = ['run', 'tag']

    def __str__(self):
        return f"{self.tag}: {'pass' if self.passed else 'fail'}"
