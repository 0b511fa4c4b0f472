# Generated by Django 5.2.6 on 2026-10-18 12:00

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=50, verbose_name='Эксперимент')),
                ('output_dir', models.CharField(max_length=500, verbose_name='Каталог результатов')),
                ('config_hash', models.CharField(max_length=16, verbose_name='Хеш конфигурации')),
                ('master_seed', models.BigIntegerField(verbose_name='Мастер-сид')),
                ('replicas', models.PositiveIntegerField(default=1, verbose_name='Реплик')),
                ('status', models.CharField(choices=[('running', 'Выполняется'), ('passed', 'Проверки пройдены'), ('failed', 'Есть непройденные проверки'), ('error', 'Ошибка')], default='running', max_length=10, verbose_name='Статус')),
                ('wall_time', models.FloatField(blank=True, null=True, verbose_name='Время выполнения (с)')),
                ('manifest', models.TextField(blank=True, verbose_name='Манифест')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Дата запуска')),
            ],
            options={
                'verbose_name': 'Запуск эксперимента',
                'verbose_name_plural': 'Запуски экспериментов',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='CheckResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('tag', models.CharField(max_length=60, verbose_name='Проверка')),
                ('passed', models.BooleanField(verbose_name='Пройдена')),
                ('measured', models.JSONField(blank=True, default=dict, verbose_name='Измеренные значения')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='checks', to='experiments.experimentrun', verbose_name='Запуск')),
            ],
            options={
                'verbose_name': 'Результат проверки',
                'verbose_name_plural': 'Результаты проверок',
                'ordering': ['run', 'tag'],
            },
        ),
    ]
